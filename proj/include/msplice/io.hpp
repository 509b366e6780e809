#pragma once

// JSON and CSV forms of kernels, paths, traces and reports.

#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "msplice/concatenation.hpp"
#include "msplice/extended_state.hpp"
#include "msplice/functionals.hpp"
#include "msplice/killing.hpp"
#include "msplice/process_models.hpp"
#include "msplice/verification.hpp"

namespace msplice {

using json = nlohmann::json;

// --- kernels --------------------------------------------------------------

namespace detail {

inline json matrix_rows(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix rows_matrix(const json& rows) {
  if (!rows.is_array() || rows.empty()) throw DimensionMismatch("rows must be a non-empty array");
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto m = static_cast<Eigen::Index>(rows.at(0).size());
  Matrix out(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    const json& row = rows.at(static_cast<std::size_t>(i));
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != m) throw DimensionMismatch("ragged rows");
    for (Eigen::Index j = 0; j < m; ++j) out(i, j) = row.at(static_cast<std::size_t>(j)).get<double>();
  }
  return out;
}

}  // namespace detail

inline json to_json(const SubKernel& k) { return {{"tag", k.tag().id()}, {"rows", detail::matrix_rows(k.matrix())}}; }

inline json to_json(const ExtKernel& k) {
  return {{"tag", k.tag().id()}, {"rows", detail::matrix_rows(k.matrix())}, {"extended", true}};
}

inline SubKernel sub_kernel_from_json(const json& j) {
  if (j.value("extended", false)) throw InvalidKernel("expected a sub-kernel, got an extended kernel");
  Matrix m = detail::rows_matrix(j.at("rows"));
  return SubKernel(m, StateSpaceTag(j.at("tag").get<int>(), static_cast<std::size_t>(m.rows())));
}

inline ExtKernel ext_kernel_from_json(const json& j) {
  if (!j.value("extended", false)) throw InvalidKernel("expected an extended kernel");
  Matrix m = detail::rows_matrix(j.at("rows"));
  return ExtKernel(m, StateSpaceTag(j.at("tag").get<int>(), static_cast<std::size_t>(m.rows() - 1)));
}

// --- paths ----------------------------------------------------------------

namespace detail {

inline json point_json(const Ext<Site>& x) { return x.alive() ? json(x.point().index) : json(nullptr); }
inline json point_json(const Ext<double>& x) { return x.alive() ? json(x.point()) : json(nullptr); }

template <class Point>
Ext<Point> point_from_json(const json& j, int tag) {
  if (j.is_null()) return Ext<Point>::dead();
  if constexpr (std::is_same_v<Point, Site>)
    return Ext<Site>(Site{tag, j.get<std::size_t>()});
  else
    return Ext<double>(j.get<double>());
}

}  // namespace detail

template <class Point>
json to_json(const JumpPath<Point>& p, int tag = 0) {
  json events = json::array();
  for (const auto& e : p.events()) events.push_back(json::array({e.time, detail::point_json(e.state)}));
  json out{{"kind", "jump"}, {"events", std::move(events)}, {"horizon", p.horizon()}};
  if constexpr (std::is_same_v<Point, Site>) out["tag"] = tag;
  return out;
}

template <class Point>
json to_json(const GridPath<Point>& p, int tag = 0) {
  json values = json::array();
  for (const auto& v : p.values()) values.push_back(detail::point_json(v));
  json out{{"kind", "grid"}, {"dt", p.dt()}, {"values", std::move(values)}};
  if constexpr (std::is_same_v<Point, Site>) out["tag"] = tag;
  return out;
}

template <class Point>
json to_json(const Path<Point>& p, int tag = 0) {
  return std::visit([tag](const auto& q) { return to_json(q, tag); }, p);
}

template <class Point>
Path<Point> path_from_json(const json& j) {
  const int tag = j.value("tag", 0);
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "jump") {
    std::vector<JumpEvent<Point>> events;
    for (const auto& e : j.at("events"))
      events.push_back({e.at(0).get<double>(), detail::point_from_json<Point>(e.at(1), tag)});
    const double horizon = j.contains("horizon") ? j.at("horizon").get<double>() : events.back().time;
    return JumpPath<Point>(std::move(events), horizon);
  }
  if (kind == "grid") {
    std::vector<Ext<Point>> values;
    for (const auto& v : j.at("values")) values.push_back(detail::point_from_json<Point>(v, tag));
    return GridPath<Point>(j.at("dt").get<double>(), std::move(values));
  }
  throw DomainError("unknown path kind '" + kind + "'");
}

// --- reports --------------------------------------------------------------

inline json to_json(const Thresholds& t) {
  return {{"p_min", t.p_min}, {"z", t.z}, {"slope_band", {t.slope_lo, t.slope_hi}}};
}

inline json to_json(const EstimatorReport& r) {
  const auto [lo, hi] = r.ci99();
  return {{"key", r.key},
          {"n", r.n},
          {"mean", r.mean},
          {"stderr", r.standard_error()},
          {"m2", r.m2},
          {"ci99", {lo, hi}},
          {"seed", {{"master_seed", r.seed.master_seed}, {"stream_lo", r.seed.stream_lo}, {"stream_hi", r.seed.stream_hi}}}};
}

inline EstimatorReport estimator_from_json(const json& j) {
  EstimatorReport r;
  r.key = j.at("key").get<std::string>();
  r.n = j.at("n").get<std::uint64_t>();
  r.mean = j.at("mean").get<double>();
  r.m2 = j.at("m2").get<double>();
  const json& s = j.at("seed");
  r.seed = {s.at("master_seed").get<std::uint64_t>(), s.at("stream_lo").get<std::uint64_t>(),
            s.at("stream_hi").get<std::uint64_t>()};
  return r;
}

inline json to_json(const SlopeReport& r) {
  json pts = json::array();
  for (const auto& [h, e] : r.points) pts.push_back({h, e});
  return {{"points", std::move(pts)}, {"dropped", r.dropped}, {"slope", r.slope},
          {"intercept", r.intercept}, {"band", {r.band_lo, r.band_hi}}, {"pass", r.pass}};
}

inline json to_json(const ChiSquareResult& r) {
  return {{"statistic", r.statistic}, {"dof", r.dof}, {"p_value", r.p_value}, {"bins_used", r.bins_used}};
}

inline json to_json(const KsResult& r) { return {{"statistic", r.statistic}, {"p_value", r.p_value}, {"n", r.n}}; }

inline json to_json(const StrataReport& r) {
  json strata = json::array();
  for (const auto& s : r.strata)
    strata.push_back({{"present", s.present}, {"n", s.n}, {"test", to_json(s.test)}});
  return {{"strata", std::move(strata)}, {"p_min", r.p_min}, {"pass", r.pass}};
}

inline json to_json(const RevivalReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"exit_state", row.exit_state}, {"n", row.n}, {"skipped", row.skipped}, {"test", to_json(row.test)}});
  return {{"renewal_index", r.renewal_index}, {"rows", std::move(rows)}, {"p_min", r.p_min}, {"pass", r.pass}};
}

inline json to_json(const ConcatSemigroupReport& r) {
  json out{{"mc", to_json(r.mc)}, {"formula", r.formula}, {"z", r.z}, {"within", r.within}, {"pass", r.pass}};
  if (r.strata) out["strata"] = to_json(*r.strata);
  return out;
}

// --- CSV ------------------------------------------------------------------

/// Shortest text that reads back to the same double.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

/// RFC-4180 table with a header row.
struct CsvTable {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row) { rows.push_back(std::move(row)); }
};

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline void write_csv(std::ostream& os, const CsvTable& t) {
  const auto line = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) os << (i ? "," : "") << csv_field(fields[i]);
    os << "\r\n";
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
}

inline std::string to_csv(const CsvTable& t) {
  std::ostringstream os;
  write_csv(os, t);
  return os.str();
}

inline CsvTable trace_csv(const AfTrace& a, std::string name = "af_trace") {
  CsvTable t{std::move(name), {"t", "value"}, {}};
  for (const auto& b : a.breakpoints()) t.add_row({format_number(b.time), format_number(b.value)});
  return t;
}

inline CsvTable trace_csv(const MfTrace& m, std::string name = "mf_trace") {
  CsvTable t{std::move(name), {"t", "value"}, {}};
  for (double x : m.breakpoints()) t.add_row({format_number(x), format_number(m.value(x))});
  return t;
}

inline CsvTable concat_event_csv(const ConcatSample<Site>& s, std::string name = "concat_events") {
  CsvTable t{std::move(name), {"k", "sigma_k", "exit_state", "revival_state", "block_lifetime"}, {}};
  for (std::size_t k = 0; k < s.sigma.size(); ++k) {
    const std::string revival = k < s.revivals.size() ? std::to_string(s.revivals[k].index) : "";
    t.add_row({std::to_string(k + 1), format_number(s.sigma[k]), std::to_string(s.exits[k].index), revival,
               format_number(s.lifetimes[k])});
  }
  return t;
}

inline CsvTable histogram_csv(const JointHistogram& h, const JointLaw& law, std::string name = "exit_joint") {
  CsvTable t{std::move(name), {"bin_lo", "bin_hi", "state", "empirical", "oracle", "z"}, {}};
  const double n = static_cast<double>(h.n);
  const auto row = [&](const std::string& lo, const std::string& hi, const std::string& state, double count,
                       double p) {
    const double emp = count / n;
    const double se = std::sqrt(std::max(p * (1.0 - p), 1e-300) / n);
    t.add_row({lo, hi, state, format_number(emp), format_number(p), format_number((emp - p) / se)});
  };
  for (std::size_t k = 0; k < h.counts.size(); ++k)
    for (std::size_t y = 0; y < h.counts[k].size(); ++y)
      row(format_number(h.edges[k]), format_number(h.edges[k + 1]), std::to_string(y), h.counts[k][y],
          law.probs[k][y]);
  row(format_number(h.edges.back()), "inf", "censored", h.censored, law.censored);
  return t;
}

inline CsvTable slope_csv(const SlopeReport& r, std::string name) {
  CsvTable t{std::move(name), {"h", "error"}, {}};
  for (const auto& [h, e] : r.points) t.add_row({format_number(h), format_number(e)});
  return t;
}

inline CsvTable estimator_csv(const std::vector<EstimatorReport>& reports, std::string name) {
  CsvTable t{std::move(name), {"key", "n", "mean", "stderr", "ci99_lo", "ci99_hi"}, {}};
  for (const auto& r : reports) {
    const auto [lo, hi] = r.ci99();
    t.add_row({r.key, std::to_string(r.n), format_number(r.mean), format_number(r.standard_error()),
               format_number(lo), format_number(hi)});
  }
  return t;
}

}  // namespace msplice
