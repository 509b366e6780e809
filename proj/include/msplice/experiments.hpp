#pragma once

// Experiment configurations (schema version "1") and their runners. A runner
// returns a report document, CSV tables and a list of named pass/fail checks.

#include <algorithm>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "msplice/concatenation.hpp"
#include "msplice/errors.hpp"
#include "msplice/extended_state.hpp"
#include "msplice/io.hpp"
#include "msplice/killing.hpp"
#include "msplice/parallel.hpp"
#include "msplice/process_models.hpp"
#include "msplice/random_models.hpp"
#include "msplice/verification.hpp"

namespace msplice {

inline constexpr const char* kSchemaVersion = "1";

// --- model descriptions ---------------------------------------------------

struct KernelsModel {
  std::size_t count = 0;
  std::size_t size_lo = 2, size_hi = 2;
};

struct CtmcModel {
  Matrix rates;
  std::vector<double> kill_rates;  // empty when absent
};

struct RandomCtmcModel {
  std::size_t count = 1;
  std::size_t states_lo = 3, states_hi = 3;
  double rate_lo = 0.5, rate_hi = 2.0;
  double kill_lo = 0.0, kill_hi = 1.0;
  bool constant_kill = false;
};

struct RevivalConfig {
  enum class Form { Rows, Constant, RandomRows, RandomConstant };
  Form form = Form::Constant;
  std::vector<std::vector<double>> rows;
};

struct ConcatModel {
  std::vector<CtmcModel> blocks;
  std::vector<RevivalConfig> revivals;
  bool cyclic = false;
  std::optional<std::size_t> max_blocks;
};

struct OuModel {
  double theta = 1.0, sigma = 1.0, dt = 1e-3;
  double kill_rate = 1.0;
  double restart_point = 0.0;
};

using ModelConfig = std::variant<KernelsModel, CtmcModel, RandomCtmcModel, ConcatModel, OuModel>;

struct RunParams {
  std::size_t n = 0;
  double x0 = 0.0;
  double t = 0.0;
  double horizon = 0.0;
  std::vector<double> times, hs, edges;
  std::vector<std::vector<double>> functions, kill_rate_sets;
  std::size_t renewal_index = 1;
  double history_time = 0.0, s = 0.0;
  double tolerance = kRowTolerance;
  double tv_max = 0.01;
  double residual_max = 1e-10;
};

struct ExperimentConfig {
  std::string kind;
  std::string name;
  std::uint64_t seed = 0;
  Thresholds thresholds;
  std::optional<std::string> output;
  ModelConfig model;
  RunParams run;
};

// --- schema ---------------------------------------------------------------

namespace schema {

inline std::string index_path(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

class Object {
 public:
  Object(const json& j, std::string path, std::initializer_list<const char*> allowed) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw SchemaError(path_, "expected an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& item : j_.items())
      if (!ok.count(item.key())) throw SchemaError(at(item.key()), "unknown key");
  }

  std::string at(const std::string& key) const { return path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }
  const json& req(const std::string& key) const {
    if (!j_.contains(key)) throw SchemaError(at(key), "missing required field");
    return j_.at(key);
  }
  const json* opt(const std::string& key) const { return j_.contains(key) ? &j_.at(key) : nullptr; }

 private:
  const json& j_;
  std::string path_;
};

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw SchemaError(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw SchemaError(path, "expected a finite number");
  return v;
}

inline double nonneg(const json& j, const std::string& path) {
  const double v = number(j, path);
  if (v < 0.0) throw SchemaError(path, "must be nonnegative");
  return v;
}

inline double positive(const json& j, const std::string& path) {
  const double v = number(j, path);
  if (!(v > 0.0)) throw SchemaError(path, "must be positive");
  return v;
}

inline std::uint64_t unsigned_int(const json& j, const std::string& path) {
  if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0))
    throw SchemaError(path, "expected a nonnegative integer");
  return j.get<std::uint64_t>();
}

inline std::size_t count(const json& j, const std::string& path, std::size_t min) {
  const auto v = unsigned_int(j, path);
  if (v < min) throw SchemaError(path, "must be at least " + std::to_string(min));
  return static_cast<std::size_t>(v);
}

inline std::string string(const json& j, const std::string& path) {
  if (!j.is_string()) throw SchemaError(path, "expected a string");
  return j.get<std::string>();
}

inline bool boolean(const json& j, const std::string& path) {
  if (!j.is_boolean()) throw SchemaError(path, "expected a boolean");
  return j.get<bool>();
}

inline std::vector<double> numbers(const json& j, const std::string& path, std::size_t min_size = 1) {
  if (!j.is_array()) throw SchemaError(path, "expected an array of numbers");
  if (j.size() < min_size) throw SchemaError(path, "needs at least " + std::to_string(min_size) + " entries");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], index_path(path, i)));
  return out;
}

inline std::vector<double> nonneg_numbers(const json& j, const std::string& path) {
  auto v = numbers(j, path);
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i] < 0.0) throw SchemaError(index_path(path, i), "must be nonnegative");
  return v;
}

inline std::vector<std::vector<double>> rows(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw SchemaError(path, "expected a non-empty array of rows");
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(numbers(j[i], index_path(path, i)));
    if (out.back().size() != out.front().size()) throw SchemaError(index_path(path, i), "ragged rows");
  }
  return out;
}

inline std::pair<double, double> range(const json& j, const std::string& path) {
  const auto v = numbers(j, path, 2);
  if (v.size() != 2) throw SchemaError(path, "expected [lo, hi]");
  if (v[0] > v[1]) throw SchemaError(path, "lo exceeds hi");
  return {v[0], v[1]};
}

inline Matrix to_matrix(const std::vector<std::vector<double>>& r) {
  Matrix m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.front().size()));
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t j = 0; j < r[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r[i][j];
  return m;
}

inline CtmcModel ctmc_block(const Object& o, const std::string& path) {
  CtmcModel m;
  const auto r = rows(o.req("rates"), o.at("rates"));
  if (r.size() != r.front().size()) throw SchemaError(o.at("rates"), "rate matrix must be square");
  m.rates = to_matrix(r);
  try {
    RateModel(m.rates, StateSpaceTag(0, r.size()));
  } catch (const Error& e) {
    throw SchemaError(o.at("rates"), e.what());
  }
  if (const json* k = o.opt("kill_rates")) {
    m.kill_rates = nonneg_numbers(*k, o.at("kill_rates"));
    if (m.kill_rates.size() != r.size()) throw SchemaError(o.at("kill_rates"), "length differs from the state count");
  }
  (void)path;
  return m;
}

inline RevivalConfig revival(const json& j, const std::string& path) {
  const Object o(j, path, {"rows", "constant", "random"});
  RevivalConfig rc;
  int forms = 0;
  if (const json* r = o.opt("rows")) {
    rc.form = RevivalConfig::Form::Rows;
    rc.rows = rows(*r, o.at("rows"));
    ++forms;
  }
  if (const json* c = o.opt("constant")) {
    rc.form = RevivalConfig::Form::Constant;
    rc.rows = {nonneg_numbers(*c, o.at("constant"))};
    ++forms;
  }
  if (const json* r = o.opt("random")) {
    const std::string s = string(*r, o.at("random"));
    if (s == "rows")
      rc.form = RevivalConfig::Form::RandomRows;
    else if (s == "constant")
      rc.form = RevivalConfig::Form::RandomConstant;
    else
      throw SchemaError(o.at("random"), "expected \"rows\" or \"constant\"");
    ++forms;
  }
  if (forms != 1) throw SchemaError(path, "give exactly one of rows, constant, random");
  for (std::size_t i = 0; i < rc.rows.size(); ++i) {
    double sum = 0.0;
    for (double v : rc.rows[i]) sum += v;
    if (std::abs(sum - 1.0) > kRowTolerance) throw SchemaError(path, "revival row " + std::to_string(i) + " must sum to 1");
  }
  return rc;
}

inline ModelConfig model(const json& j, const std::string& path) {
  if (!j.is_object()) throw SchemaError(path, "expected an object");
  if (!j.contains("type")) throw SchemaError(path + ".type", "missing required field");
  const std::string type = string(j.at("type"), path + ".type");
  if (type == "kernels") {
    const Object o(j, path, {"type", "count", "sizes"});
    KernelsModel m;
    m.count = count(o.req("count"), o.at("count"), 1);
    const auto [lo, hi] = range(o.req("sizes"), o.at("sizes"));
    if (lo < 1 || lo != std::floor(lo) || hi != std::floor(hi)) throw SchemaError(o.at("sizes"), "sizes must be positive integers");
    m.size_lo = static_cast<std::size_t>(lo);
    m.size_hi = static_cast<std::size_t>(hi);
    return m;
  }
  if (type == "ctmc") {
    const Object o(j, path, {"type", "rates", "kill_rates"});
    return ctmc_block(o, path);
  }
  if (type == "random-ctmc") {
    const Object o(j, path, {"type", "count", "states", "rate_range", "kill_range", "constant_kill"});
    RandomCtmcModel m;
    m.count = count(o.req("count"), o.at("count"), 1);
    const auto [slo, shi] = range(o.req("states"), o.at("states"));
    if (slo < 1 || slo != std::floor(slo) || shi != std::floor(shi)) throw SchemaError(o.at("states"), "state counts must be positive integers");
    m.states_lo = static_cast<std::size_t>(slo);
    m.states_hi = static_cast<std::size_t>(shi);
    std::tie(m.rate_lo, m.rate_hi) = range(o.req("rate_range"), o.at("rate_range"));
    if (m.rate_lo < 0.0) throw SchemaError(o.at("rate_range"), "rates must be nonnegative");
    std::tie(m.kill_lo, m.kill_hi) = range(o.req("kill_range"), o.at("kill_range"));
    if (m.kill_lo < 0.0) throw SchemaError(o.at("kill_range"), "kill rates must be nonnegative");
    if (const json* c = o.opt("constant_kill")) m.constant_kill = boolean(*c, o.at("constant_kill"));
    return m;
  }
  if (type == "concat") {
    const Object o(j, path, {"type", "blocks", "revivals", "cyclic", "max_blocks"});
    ConcatModel m;
    const json& blocks = o.req("blocks");
    if (!blocks.is_array() || blocks.empty()) throw SchemaError(o.at("blocks"), "expected a non-empty array");
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::string bp = index_path(o.at("blocks"), i);
      const Object b(blocks[i], bp, {"rates", "kill_rates"});
      m.blocks.push_back(ctmc_block(b, bp));
      if (m.blocks.back().kill_rates.empty()) throw SchemaError(bp + ".kill_rates", "missing required field");
    }
    const json& revs = o.req("revivals");
    if (!revs.is_array()) throw SchemaError(o.at("revivals"), "expected an array");
    for (std::size_t i = 0; i < revs.size(); ++i) m.revivals.push_back(revival(revs[i], index_path(o.at("revivals"), i)));
    if (const json* c = o.opt("cyclic")) m.cyclic = boolean(*c, o.at("cyclic"));
    if (const json* mb = o.opt("max_blocks")) m.max_blocks = count(*mb, o.at("max_blocks"), 1);
    if (m.cyclic && (m.blocks.size() != 1 || m.revivals.size() != 1))
      throw SchemaError(o.at("revivals"), "cyclic mode takes one block and one revival kernel");
    if (!m.cyclic && m.revivals.size() + 1 != m.blocks.size())
      throw SchemaError(o.at("revivals"), "need one revival kernel between consecutive blocks");
    if (!m.cyclic && m.max_blocks) throw SchemaError(o.at("max_blocks"), "only meaningful in cyclic mode");
    for (std::size_t i = 0; i < m.revivals.size(); ++i) {
      const auto& rc = m.revivals[i];
      const std::size_t from = static_cast<std::size_t>(m.blocks[i].rates.rows());
      const std::size_t to = static_cast<std::size_t>(m.blocks[m.cyclic ? 0 : i + 1].rates.rows());
      const std::string rp = index_path(o.at("revivals"), i);
      if (rc.form == RevivalConfig::Form::Rows && rc.rows.size() != from)
        throw SchemaError(rp + ".rows", "need one row per exit state");
      if (!rc.rows.empty() && rc.rows.front().size() != to) throw SchemaError(rp, "row length differs from the next block's state count");
    }
    return m;
  }
  if (type == "ou") {
    const Object o(j, path, {"type", "theta", "sigma", "dt", "kill_rate", "restart_point"});
    OuModel m;
    m.theta = number(o.req("theta"), o.at("theta"));
    m.sigma = nonneg(o.req("sigma"), o.at("sigma"));
    m.dt = positive(o.req("dt"), o.at("dt"));
    m.kill_rate = positive(o.req("kill_rate"), o.at("kill_rate"));
    m.restart_point = number(o.req("restart_point"), o.at("restart_point"));
    return m;
  }
  throw SchemaError(path + ".type", "unknown model type '" + type + "'");
}

inline const char* model_type(const ModelConfig& m) {
  static constexpr const char* names[] = {"kernels", "ctmc", "random-ctmc", "concat", "ou"};
  return names[m.index()];
}

struct KindRule {
  const char* kind;
  std::vector<std::string> models;
  std::vector<std::string> required;
  std::vector<std::string> optional;
};

inline const std::vector<KindRule>& kind_rules() {
  static const std::vector<KindRule> rules = {
      {"extend-check", {"kernels"}, {}, {"tolerance"}},
      {"lifetime-law", {"ctmc"}, {"n", "horizon"}, {"x0"}},
      {"kill-semigroup", {"ctmc"}, {"n", "times"}, {"x0", "kill_rate_sets", "functions"}},
      {"generator-kill", {"ctmc", "random-ctmc"}, {"hs"}, {"functions"}},
      {"exit-joint", {"ctmc"}, {"n", "edges"}, {"x0"}},
      {"revival", {"concat"}, {"n", "horizon"}, {"x0", "renewal_index"}},
      {"concat", {"concat"}, {"n", "t", "functions"}, {"x0"}},
      {"restarts-formula", {"concat", "ou"}, {"n", "t"}, {"x0", "functions"}},
      {"renewal-gamma", {"concat"}, {"n", "horizon"}, {"x0", "renewal_index"}},
      {"generator-concat", {"random-ctmc", "concat"}, {"hs"}, {}},
      {"restore-invariant", {"random-ctmc", "concat"}, {"horizon"}, {"x0", "tv_max", "residual_max"}},
      {"markov-strata", {"ctmc", "concat"}, {"n", "history_time", "s", "t"}, {"x0"}},
  };
  return rules;
}

inline RunParams run_params(const json& j, const std::string& path, const KindRule& rule) {
  if (!j.is_object()) throw SchemaError(path, "expected an object");
  std::set<std::string> allowed(rule.required.begin(), rule.required.end());
  allowed.insert(rule.optional.begin(), rule.optional.end());
  for (const auto& item : j.items())
    if (!allowed.count(item.key())) throw SchemaError(path + "." + item.key(), "unknown key for kind " + std::string(rule.kind));
  for (const auto& key : rule.required)
    if (!j.contains(key)) throw SchemaError(path + "." + key, "missing required field");

  RunParams r;
  const auto p = [&](const char* key) { return path + "." + key; };
  if (j.contains("n")) r.n = count(j["n"], p("n"), 30);
  if (j.contains("x0")) r.x0 = number(j["x0"], p("x0"));
  if (j.contains("t")) r.t = positive(j["t"], p("t"));
  if (j.contains("horizon")) r.horizon = positive(j["horizon"], p("horizon"));
  if (j.contains("times")) {
    r.times = numbers(j["times"], p("times"));
    for (std::size_t i = 0; i < r.times.size(); ++i)
      if (!(r.times[i] > 0.0)) throw SchemaError(index_path(p("times"), i), "must be positive");
  }
  if (j.contains("hs")) {
    r.hs = numbers(j["hs"], p("hs"), 3);
    for (std::size_t i = 0; i < r.hs.size(); ++i) {
      if (!(r.hs[i] > 0.0)) throw SchemaError(index_path(p("hs"), i), "must be positive");
      if (i > 0 && !(r.hs[i] < r.hs[i - 1])) throw SchemaError(index_path(p("hs"), i), "step sizes must strictly decrease");
    }
  }
  if (j.contains("edges")) {
    r.edges = numbers(j["edges"], p("edges"), 2);
    if (r.edges.front() != 0.0) throw SchemaError(index_path(p("edges"), 0), "first edge must be 0");
    for (std::size_t i = 1; i < r.edges.size(); ++i)
      if (!(r.edges[i] > r.edges[i - 1])) throw SchemaError(index_path(p("edges"), i), "edges must increase");
  }
  if (j.contains("functions")) r.functions = rows(j["functions"], p("functions"));
  if (j.contains("kill_rate_sets")) {
    r.kill_rate_sets = rows(j["kill_rate_sets"], p("kill_rate_sets"));
    for (std::size_t i = 0; i < r.kill_rate_sets.size(); ++i)
      nonneg_numbers(j["kill_rate_sets"][i], index_path(p("kill_rate_sets"), i));
  }
  if (j.contains("renewal_index")) r.renewal_index = count(j["renewal_index"], p("renewal_index"), 1);
  if (j.contains("history_time")) r.history_time = nonneg(j["history_time"], p("history_time"));
  if (j.contains("s")) r.s = positive(j["s"], p("s"));
  if (j.contains("tolerance")) r.tolerance = positive(j["tolerance"], p("tolerance"));
  if (j.contains("tv_max")) r.tv_max = positive(j["tv_max"], p("tv_max"));
  if (j.contains("residual_max")) r.residual_max = positive(j["residual_max"], p("residual_max"));
  return r;
}

inline Thresholds thresholds(const json& j, const std::string& path) {
  const Object o(j, path, {"p_min", "z", "slope_band"});
  Thresholds t;
  if (const json* v = o.opt("p_min")) t.p_min = positive(*v, o.at("p_min"));
  if (const json* v = o.opt("z")) t.z = positive(*v, o.at("z"));
  if (const json* v = o.opt("slope_band")) std::tie(t.slope_lo, t.slope_hi) = range(*v, o.at("slope_band"));
  return t;
}

inline std::size_t state_count(const ModelConfig& m) {
  if (const auto* c = std::get_if<CtmcModel>(&m)) return static_cast<std::size_t>(c->rates.rows());
  if (const auto* c = std::get_if<ConcatModel>(&m)) return static_cast<std::size_t>(c->blocks.front().rates.rows());
  return 0;
}

inline bool constant_values(const std::vector<double>& v) {
  return !v.empty() && std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

/// Checks that need both the model and the run parameters.
inline void cross_check(const ExperimentConfig& c) {
  const std::string& k = c.kind;
  const RunParams& r = c.run;
  const std::size_t states = state_count(c.model);
  if (states > 0 && (r.x0 < 0.0 || r.x0 != std::floor(r.x0) || r.x0 >= static_cast<double>(states)))
    throw SchemaError("$.run.x0", "must be a state index of the first block");
  const auto* ctmc = std::get_if<CtmcModel>(&c.model);
  const auto* concat = std::get_if<ConcatModel>(&c.model);
  if (ctmc && ctmc->kill_rates.empty() && k != "kill-semigroup")
    throw SchemaError("$.model.kill_rates", "missing required field");
  if (ctmc && k == "kill-semigroup" && ctmc->kill_rates.empty() && r.kill_rate_sets.empty())
    throw SchemaError("$.run.kill_rate_sets", "give kill_rate_sets or model kill_rates");
  if (k == "lifetime-law" && !(constant_values(ctmc->kill_rates) && ctmc->kill_rates.front() > 0.0))
    throw SchemaError("$.model.kill_rates", "lifetime law needs a constant positive kill rate");
  for (std::size_t i = 0; i < r.kill_rate_sets.size(); ++i)
    if (r.kill_rate_sets[i].size() != states) throw SchemaError(index_path("$.run.kill_rate_sets", i), "length differs from the state count");
  if (ctmc && !r.functions.empty())
    for (std::size_t i = 0; i < r.functions.size(); ++i)
      if (r.functions[i].size() != states) throw SchemaError(index_path("$.run.functions", i), "length differs from the state count");
  if (k == "markov-strata" && !(r.history_time < r.s)) throw SchemaError("$.run.history_time", "must be below s");
  if (concat) {
    const bool closed = concat->cyclic && constant_values(concat->blocks[0].kill_rates) &&
                        concat->blocks[0].kill_rates.front() > 0.0 &&
                        (concat->revivals[0].form == RevivalConfig::Form::Constant ||
                         concat->revivals[0].form == RevivalConfig::Form::RandomConstant);
    if ((k == "restarts-formula" || k == "generator-concat") && (!closed || concat->max_blocks))
      throw SchemaError("$.model", "needs an unbounded cyclic block with constant positive kill rate and constant revival");
    if (k == "renewal-gamma") {
      if (!concat->cyclic || !constant_values(concat->blocks[0].kill_rates) || concat->blocks[0].kill_rates.front() <= 0.0)
        throw SchemaError("$.model", "renewal law needs a cyclic block with constant positive kill rate");
      if (!concat->max_blocks) throw SchemaError("$.model.max_blocks", "missing required field");
      if (r.renewal_index > *concat->max_blocks) throw SchemaError("$.run.renewal_index", "exceeds max_blocks");
    }
    if (k == "restore-invariant" && (!concat->cyclic || concat->max_blocks ||
                                     concat->revivals[0].form == RevivalConfig::Form::Rows ||
                                     concat->revivals[0].form == RevivalConfig::Form::RandomRows))
      throw SchemaError("$.model", "restore chain needs an unbounded cyclic block with constant revival");
    if (k == "concat" || k == "restarts-formula") {
      const std::size_t need = concat->blocks.size();
      if (r.functions.size() != need) throw SchemaError("$.run.functions", "need one function per block");
      for (std::size_t i = 0; i < need; ++i)
        if (r.functions[i].size() != static_cast<std::size_t>(concat->blocks[i].rates.rows()))
          throw SchemaError(index_path("$.run.functions", i), "length differs from the block's state count");
      if (k == "concat" && !concat->cyclic && concat->blocks.size() > 2)
        throw SchemaError("$.model.blocks", "exact value available for at most two blocks");
      if (k == "concat" && concat->cyclic && (!closed || concat->max_blocks))
        throw SchemaError("$.model", "cyclic exact value needs constant kill rate, constant revival and no max_blocks");
    }
    if (k == "revival" && !concat->cyclic && r.renewal_index + 1 > concat->blocks.size())
      throw SchemaError("$.run.renewal_index", "no revival at this index");
  }
  if (std::holds_alternative<OuModel>(c.model) && !r.functions.empty())
    throw SchemaError("$.run.functions", "the diffusion check uses f = id");
  if (const auto* rc = std::get_if<RandomCtmcModel>(&c.model)) {
    if (k == "generator-concat" && !rc->constant_kill)
      throw SchemaError("$.model.constant_kill", "restore generator check needs a constant kill rate");
    if (k == "restore-invariant" && rc->states_lo < 1) throw SchemaError("$.model.states", "must be positive");
  }
}

}  // namespace schema

/// Validates a whole configuration document; throws SchemaError with a JSON path.
inline ExperimentConfig parse_config(const json& j) {
  const schema::Object o(j, "$", {"schema_version", "kind", "name", "seed", "thresholds", "output", "model", "run"});
  const std::string version = schema::string(o.req("schema_version"), "$.schema_version");
  if (version != kSchemaVersion) throw SchemaError("$.schema_version", "unsupported version '" + version + "'");
  ExperimentConfig c;
  c.kind = schema::string(o.req("kind"), "$.kind");
  const auto& rules = schema::kind_rules();
  const auto rule = std::find_if(rules.begin(), rules.end(), [&](const schema::KindRule& r) { return c.kind == r.kind; });
  if (rule == rules.end()) throw SchemaError("$.kind", "unknown experiment kind '" + c.kind + "'");
  c.name = o.has("name") ? schema::string(o.req("name"), "$.name") : c.kind;
  c.seed = schema::unsigned_int(o.req("seed"), "$.seed");
  if (const json* t = o.opt("thresholds")) c.thresholds = schema::thresholds(*t, "$.thresholds");
  if (const json* out = o.opt("output")) c.output = schema::string(*out, "$.output");
  c.model = schema::model(o.req("model"), "$.model");
  if (std::find(rule->models.begin(), rule->models.end(), schema::model_type(c.model)) == rule->models.end())
    throw SchemaError("$.model.type", "model type '" + std::string(schema::model_type(c.model)) + "' not accepted by " + c.kind);
  c.run = o.has("run") ? schema::run_params(o.req("run"), "$.run", *rule) : schema::run_params(json::object(), "$.run", *rule);
  schema::cross_check(c);
  return c;
}

inline std::vector<std::string> experiment_kinds() {
  std::vector<std::string> out;
  for (const auto& r : schema::kind_rules()) out.emplace_back(r.kind);
  return out;
}

// --- results --------------------------------------------------------------

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct ExperimentResult {
  json report;
  std::vector<CsvTable> tables;
  std::vector<Check> checks;

  bool pass() const {
    return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
  }
};

struct RunOptions {
  unsigned jobs = 1;
};

namespace detail {

inline constexpr std::uint64_t kModelStream = 0xF000'0000'0000'0000ULL;
inline constexpr std::uint64_t kPartStride = 1ULL << 32;

inline McOptions mc_options(const ExperimentConfig& c, const RunOptions& o, std::uint64_t part) {
  return {c.seed, part * kPartStride, o.jobs};
}

inline RngStream model_rng(const ExperimentConfig& c, std::uint64_t index) { return RngStream(c.seed, kModelStream, index); }

inline bool near(double mean, double exact, double se, double z) {
  return std::abs(mean - exact) <= std::max(z * se, 1e-12);
}

inline std::string fmt(double v) { return format_number(v); }

inline RateModel rate_model(const CtmcModel& m, int tag) {
  return RateModel(m.rates, StateSpaceTag(tag, static_cast<std::size_t>(m.rates.rows())));
}

inline KilledProcess<RateModel> exp_kill(const RateModel& m, const std::vector<double>& c) {
  return {m, ExpRate<Site>{RateFunction<Site>::on_sites(c, m.tag().id())}};
}

inline SiteRevival build_revival(const RevivalConfig& rc, std::size_t from, std::size_t to, int from_tag, int to_tag,
                                 RngStream& rng) {
  switch (rc.form) {
    case RevivalConfig::Form::Rows:
      return SiteRevival::state_dependent(rc.rows, from_tag, to_tag);
    case RevivalConfig::Form::Constant:
      return SiteRevival::constant(rc.rows.front(), from_tag, to_tag);
    case RevivalConfig::Form::RandomRows:
      return SiteRevival::state_dependent(random_stochastic_rows(from, to, rng), from_tag, to_tag);
    case RevivalConfig::Form::RandomConstant:
      return SiteRevival::constant(random_distribution(to, rng), from_tag, to_tag);
  }
  throw ConfigurationError("unknown revival form");
}

/// Blocks carry tags 1, 2, ...; random revival rows come from the model stream.
inline Concatenation<RateModel> build_concat(const ExperimentConfig& c, const ConcatModel& m, double horizon) {
  Concatenation<RateModel> process;
  process.horizon = horizon;
  process.cyclic = m.cyclic;
  process.max_blocks = m.max_blocks;
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    const RateModel rm = rate_model(m.blocks[i], static_cast<int>(i) + 1);
    process.blocks.push_back({exp_kill(rm, m.blocks[i].kill_rates), static_cast<int>(i) + 1});
  }
  RngStream rng = model_rng(c, 0);
  for (std::size_t i = 0; i < m.revivals.size(); ++i) {
    const std::size_t to_index = m.cyclic ? 0 : i + 1;
    process.transfers.push_back(build_revival(m.revivals[i], process.blocks[i].kill.model.size(),
                                           process.blocks[to_index].kill.model.size(), static_cast<int>(i) + 1,
                                           static_cast<int>(to_index) + 1, rng));
  }
  return process;
}

/// One random restore model: rates, kill rates and constant revival law.
struct RestoreModel {
  RateModel model;
  std::vector<double> c;
  std::vector<double> mu;
};

inline RestoreModel random_restore_model(const RandomCtmcModel& rc, RngStream& rng) {
  const auto span = rc.states_hi - rc.states_lo + 1;
  const std::size_t n = rc.states_lo + std::min<std::size_t>(span - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(span)));
  RateModel m = random_rate_model(n, rc.rate_lo, rc.rate_hi, 1, rng);
  std::vector<double> c;
  if (rc.constant_kill)
    c.assign(n, uniform_in(rng, rc.kill_lo, rc.kill_hi));
  else
    c = random_values(n, rc.kill_lo, rc.kill_hi, rng);
  std::vector<double> mu = random_distribution(n, rng);
  return {std::move(m), std::move(c), std::move(mu)};
}

inline std::vector<RestoreModel> restore_models(const ExperimentConfig& c) {
  std::vector<RestoreModel> out;
  if (const auto* rc = std::get_if<RandomCtmcModel>(&c.model)) {
    for (std::size_t k = 0; k < rc->count; ++k) {
      RngStream rng = model_rng(c, k + 1);
      out.push_back(random_restore_model(*rc, rng));
    }
    return out;
  }
  const auto& cm = std::get<ConcatModel>(c.model);
  const Concatenation<RateModel> process = build_concat(c, cm, 1.0);
  out.push_back({process.blocks[0].kill.model, cm.blocks[0].kill_rates, process.transfers[0].row(0)});
  return out;
}

inline json check_list(const std::vector<Check>& checks) {
  json out = json::array();
  for (const auto& ch : checks) out.push_back({{"name", ch.name}, {"pass", ch.pass}, {"detail", ch.detail}});
  return out;
}

// --- runners ----------------------------------------------------------------

inline void run_extend_check(const ExperimentConfig& c, ExperimentResult& res) {
  const auto& km = std::get<KernelsModel>(c.model);
  RngStream rng = model_rng(c, 0);
  CsvTable table{"kernels", {"kernel", "size", "row_error", "dead_row_exact", "identity_error", "restriction_exact"}, {}};
  double worst_row = 0.0, worst_identity = 0.0;
  bool dead_rows = true, restrictions = true;
  for (std::size_t k = 0; k < km.count; ++k) {
    const std::size_t span = km.size_hi - km.size_lo + 1;
    const std::size_t n = km.size_lo + std::min(span - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(span)));
    const SubKernel kern = random_sub_kernel(n, 1, rng);
    const ExtKernel ext = extend_kernel(kern);
    const Matrix& e = ext.matrix();
    const auto dead = static_cast<Eigen::Index>(n);
    double row_err = 0.0;
    for (Eigen::Index i = 0; i < e.rows(); ++i) row_err = std::max(row_err, std::abs(e.row(i).sum() - 1.0));
    bool dead_ok = e(dead, dead) == 1.0;
    for (Eigen::Index j = 0; j < dead; ++j) dead_ok = dead_ok && e(dead, j) == 0.0;
    Vector fstar(dead + 1);
    for (Eigen::Index i = 0; i <= dead; ++i) fstar(i) = uniform_in(rng, -1.0, 1.0);
    const double id_err = (apply_extended(ext, fstar) - extension_identity(kern, fstar)).cwiseAbs().maxCoeff();
    const bool restr = restrict_kernel(ext).matrix() == kern.matrix();
    worst_row = std::max(worst_row, row_err);
    worst_identity = std::max(worst_identity, id_err);
    dead_rows = dead_rows && dead_ok;
    restrictions = restrictions && restr;
    table.add_row({std::to_string(k), std::to_string(n), fmt(row_err), dead_ok ? "true" : "false", fmt(id_err),
                   restr ? "true" : "false"});
  }
  const double tol = c.run.tolerance;
  res.checks.push_back({"row_sums", worst_row <= tol, "max |row sum - 1| = " + fmt(worst_row)});
  res.checks.push_back({"cemetery_row", dead_rows, "Dead row is the unit vector on Dead"});
  res.checks.push_back({"extension_identity", worst_identity <= tol, "max error = " + fmt(worst_identity)});
  res.checks.push_back({"restriction", restrictions, "restricting the extension recovers the kernel"});
  res.report["results"] = {{"kernels", km.count}, {"max_row_error", worst_row}, {"max_identity_error", worst_identity},
                           {"tolerance", tol}};
  res.tables.push_back(std::move(table));
}

inline std::vector<double> quantile_levels() { return {0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99}; }

inline CsvTable quantile_table(std::string name, std::vector<double> xs, const std::function<double(double)>& inverse_cdf) {
  std::sort(xs.begin(), xs.end());
  CsvTable t{std::move(name), {"level", "empirical", "exact"}, {}};
  for (double q : quantile_levels()) {
    const auto idx = std::min(xs.size() - 1, static_cast<std::size_t>(q * static_cast<double>(xs.size())));
    t.add_row({fmt(q), fmt(xs[idx]), fmt(inverse_cdf(q))});
  }
  return t;
}

inline void run_lifetime_law(const ExperimentConfig& c, const RunOptions& o, ExperimentResult& res) {
  const auto& cm = std::get<CtmcModel>(c.model);
  const RateModel m = rate_model(cm, 1);
  const auto process = exp_kill(m, cm.kill_rates);
  const double rate = cm.kill_rates.front();
  const std::size_t n = c.run.n;
  const McOptions opt = mc_options(c, o, 0);
  const Site start = m.site(static_cast<std::size_t>(c.run.x0));
  std::vector<double> life(n, -1.0);
  parallel_for(n, opt.jobs, [&](std::size_t i) {
    RngStream rng(opt.master_seed, opt.stream_base + i);
    RngStream path = rng.lane(0), clock = rng.lane(1);
    const auto run = sample_block_run(process, start, c.run.horizon, path, clock);
    if (!run.lifetime.censored()) life[i] = run.lifetime.time();
  });
  const auto censored = static_cast<std::size_t>(std::count(life.begin(), life.end(), -1.0));
  res.checks.push_back({"no_censoring", censored == 0, std::to_string(censored) + " lifetimes beyond the horizon"});
  std::vector<double> alive;
  for (double v : life)
    if (v >= 0.0) alive.push_back(v);
  const KsResult ks = ks_statistic(alive, [rate](double x) { return x <= 0.0 ? 0.0 : -std::expm1(-rate * x); });
  res.checks.push_back({"ks_exponential", ks.p_value > c.thresholds.p_min, "p = " + fmt(ks.p_value)});
  const EstimatorReport mean = make_report("lifetime_mean", alive, {c.seed, 0, n});
  res.report["results"] = {{"rate", rate}, {"ks", to_json(ks)}, {"mean", to_json(mean)}, {"exact_mean", 1.0 / rate},
                           {"censored", censored}};
  res.tables.push_back(quantile_table("lifetime_quantiles", alive, [rate](double q) { return -std::log1p(-q) / rate; }));
}

inline void run_kill_semigroup(const ExperimentConfig& c, const RunOptions& o, ExperimentResult& res) {
  const auto& cm = std::get<CtmcModel>(c.model);
  const RateModel m = rate_model(cm, 1);
  const std::size_t x0 = static_cast<std::size_t>(c.run.x0);
  auto sets = c.run.kill_rate_sets;
  if (sets.empty()) sets.push_back(cm.kill_rates);
  std::vector<std::vector<double>> fvals = c.run.functions;
  if (fvals.empty())
    for (std::size_t j = 0; j < m.size(); ++j) {
      fvals.emplace_back(m.size(), 0.0);
      fvals.back()[j] = 1.0;
    }
  std::vector<BoundedFunction<Site>> fs;
  for (std::size_t j = 0; j < fvals.size(); ++j) fs.push_back(site_function(fvals[j], "f" + std::to_string(j)));

  CsvTable table{"killed_semigroup",
                 {"kill_set", "t", "f", "exact", "weighted_mean", "weighted_stderr", "hard_mean", "hard_stderr",
                  "z_weighted", "z_hard_vs_weighted"},
                 {}};
  json rows = json::array();
  for (std::size_t p = 0; p < sets.size(); ++p) {
    const auto process = exp_kill(m, sets[p]);
    const KilledMcTable mc = killed_semigroup_mc_table(process, fs, c.run.times, m.site(x0), c.run.n, mc_options(c, o, p));
    for (std::size_t ti = 0; ti < c.run.times.size(); ++ti) {
      const double t = c.run.times[ti];
      const Matrix q = ctmc_semigroup_exact(m, std::span<const double>(sets[p]), t).matrix();
      for (std::size_t fi = 0; fi < fs.size(); ++fi) {
        const double exact = (q * to_vector(fvals[fi]))(static_cast<Eigen::Index>(x0));
        const auto& w = mc.weighted[ti][fi];
        const auto& h = mc.hard[ti][fi];
        const double se_w = w.standard_error();
        const double se_c = std::hypot(se_w, h.standard_error());
        const double z_w = se_w > 0.0 ? (w.mean - exact) / se_w : 0.0;
        const double z_h = se_c > 0.0 ? (h.mean - w.mean) / se_c : 0.0;
        const std::string label = "set" + std::to_string(p) + "/t=" + fmt(t) + "/" + fs[fi].name;
        res.checks.push_back({"weighted_vs_exact " + label, near(w.mean, exact, se_w, c.thresholds.z), "z = " + fmt(z_w)});
        res.checks.push_back({"hard_vs_weighted " + label, near(h.mean, w.mean, se_c, c.thresholds.z), "z = " + fmt(z_h)});
        table.add_row({std::to_string(p), fmt(t), fs[fi].name, fmt(exact), fmt(w.mean), fmt(se_w), fmt(h.mean),
                       fmt(h.standard_error()), fmt(z_w), fmt(z_h)});
        rows.push_back({{"kill_rates", sets[p]}, {"t", t}, {"f", fvals[fi]}, {"exact", exact},
                        {"weighted", to_json(w)}, {"hard", to_json(h)}});
      }
    }
  }
  res.report["results"] = {{"x0", x0}, {"estimates", std::move(rows)}};
  res.tables.push_back(std::move(table));
}

inline void record_slope(ExperimentResult& res, CsvTable& points, CsvTable& fits, const std::string& label,
                         const std::vector<std::pair<double, double>>& errors, const Thresholds& th, json& out) {
  for (const auto& [h, e] : errors) points.add_row({label, fmt(h), fmt(e)});
  try {
    const SlopeReport r = fit_slope(errors, th.slope_lo, th.slope_hi);
    res.checks.push_back({"slope " + label, r.pass, "slope = " + fmt(r.slope)});
    fits.add_row({label, fmt(r.slope), fmt(r.intercept), r.pass ? "true" : "false"});
    out.push_back({{"model", label}, {"fit", to_json(r)}});
  } catch (const DegenerateInput& e) {
    res.checks.push_back({"slope " + label, false, e.what()});
    fits.add_row({label, "", "", "false"});
    out.push_back({{"model", label}, {"error", e.what()}});
  }
}

inline void run_generator_kill(const ExperimentConfig& c, ExperimentResult& res) {
  CsvTable points{"generator_errors", {"model", "h", "error"}, {}};
  CsvTable fits{"generator_fits", {"model", "slope", "intercept", "pass"}, {}};
  json out = json::array();
  std::vector<std::tuple<RateModel, std::vector<double>, Vector>> models;
  if (const auto* cm = std::get_if<CtmcModel>(&c.model)) {
    const RateModel m = rate_model(*cm, 1);
    if (c.run.functions.empty()) {
      RngStream rng = model_rng(c, 1);
      models.emplace_back(m, cm->kill_rates, to_vector(random_values(m.size(), -1.0, 1.0, rng)));
    }
    for (const auto& f : c.run.functions) models.emplace_back(m, cm->kill_rates, to_vector(f));
  } else {
    const auto& rc = std::get<RandomCtmcModel>(c.model);
    for (std::size_t k = 0; k < rc.count; ++k) {
      RngStream rng = model_rng(c, k + 1);
      RestoreModel rm = random_restore_model(rc, rng);
      Vector f = to_vector(random_values(rm.model.size(), -1.0, 1.0, rng));
      models.emplace_back(std::move(rm.model), std::move(rm.c), std::move(f));
    }
  }
  for (std::size_t k = 0; k < models.size(); ++k) {
    const auto& [m, rates, f] = models[k];
    record_slope(res, points, fits, "model" + std::to_string(k), killed_generator_errors(m, rates, f, c.run.hs),
                 c.thresholds, out);
  }
  res.report["results"] = {{"hs", c.run.hs}, {"models", std::move(out)}};
  res.tables.push_back(std::move(points));
  res.tables.push_back(std::move(fits));
}

inline void run_exit_joint(const ExperimentConfig& c, const RunOptions& o, ExperimentResult& res) {
  const auto& cm = std::get<CtmcModel>(c.model);
  const RateModel m = rate_model(cm, 1);
  const auto process = exp_kill(m, cm.kill_rates);
  const std::size_t x0 = static_cast<std::size_t>(c.run.x0);
  const JointHistogram h = exit_joint_histogram(process, x0, c.run.n, c.run.edges, mc_options(c, o, 0));
  const JointLaw law = exit_joint_oracle(m, cm.kill_rates, x0, c.run.edges);
  const ChiSquareResult chi = joint_chi_square(h, law);
  res.checks.push_back({"joint_chi_square", chi.p_value > c.thresholds.p_min, "p = " + fmt(chi.p_value)});
  res.report["results"] = {{"chi_square", to_json(chi)}, {"censored", h.censored}, {"oracle_censored", law.censored}};
  res.tables.push_back(histogram_csv(h, law));
}

inline ConcatSample<Site> slim(ConcatSample<Site> s, const Site& x0, double horizon) {
  s.path = JumpPath<Site>({{0.0, x0}}, horizon);
  return s;
}

inline void run_revival(const ExperimentConfig& c, const RunOptions& o, ExperimentResult& res) {
  const auto& cm = std::get<ConcatModel>(c.model);
  const Concatenation<RateModel> process = build_concat(c, cm, c.run.horizon);
  const Site start{1, static_cast<std::size_t>(c.run.x0)};
  const McOptions opt = mc_options(c, o, 0);
  std::optional<ConcatSample<Site>> first;
  std::vector<ConcatSample<Site>> samples(c.run.n, slim({JumpPath<Site>({{0.0, start}}, 1.0), {}, {}, {}, {}, 0}, start, 1.0));
  parallel_for(c.run.n, opt.jobs, [&](std::size_t i) {
    auto s = simulate_concatenated(process, start, RngStream(opt.master_seed, opt.stream_base + i));
    if (i == 0) first = s;
    samples[i] = slim(std::move(s), start, process.horizon);
  });
  const std::size_t k = c.run.renewal_index;
  const SiteRevival& mu = process.transfers[cm.cyclic ? 0 : k - 1];
  const RevivalReport rep = revival_conditional_test(samples, k, mu, c.thresholds.p_min);
  std::size_t tested = 0;
  for (const auto& row : rep.rows) {
    if (row.skipped) continue;
    ++tested;
    res.checks.push_back({"revival exit_state=" + std::to_string(row.exit_state), row.test.p_value > c.thresholds.p_min,
                          "p = " + fmt(row.test.p_value)});
  }
  res.checks.push_back({"rows_tested", tested > 0, std::to_string(tested) + " exit states with enough samples"});

  CsvTable table{"revival_law", {"exit_state", "revival_state", "count", "empirical", "mu"}, {}};
  std::map<std::size_t, std::vector<double>> counts;
  for (const auto& s : samples)
    if (s.revivals.size() >= k) {
      auto& row = counts[s.exits[k - 1].index];
      if (row.empty()) row.assign(mu.target_size(), 0.0);
      row[s.revivals[k - 1].index] += 1.0;
    }
  for (const auto& [z, row] : counts) {
    double tot = 0.0;
    for (double v : row) tot += v;
    for (std::size_t y = 0; y < row.size(); ++y)
      table.add_row({std::to_string(z), std::to_string(y), fmt(row[y]), fmt(row[y] / tot), fmt(mu.row(z)[y])});
  }
  json mu_rows = json::array();
  for (std::size_t z = 0; z < (mu.is_constant() ? 1 : mu.row_count()); ++z) mu_rows.push_back(mu.row(z));
  res.report["results"] = {{"revival", to_json(rep)}, {"mu", std::move(mu_rows)}};
  res.tables.push_back(std::move(table));
  if (first) res.tables.push_back(concat_event_csv(*first, "sample0_events"));
}

inline TaggedFunction tagged_functions(const std::vector<std::vector<double>>& fs) {
  TaggedFunction f;
  for (std::size_t i = 0; i < fs.size(); ++i) f[static_cast<int>(i) + 1] = to_vector(fs[i]);
  return f;
}

inline void run_concat(const ExperimentConfig& c, const RunOptions& o, ExperimentResult& res) {
  const auto& cm = std::get<ConcatModel>(c.model);
  const Concatenation<RateModel> process = build_concat(c, cm, c.run.t);
  ConcatSemigroupReport rep;
  try {
    rep = concat_semigroup_check(process, tagged_functions(c.run.functions), c.run.t, static_cast<std::size_t>(c.run.x0),
                                 c.run.n, mc_options(c, o, 0), c.thresholds);
  } catch (const TheoremCheckFailure& e) {
    rep = e.report();
  }
  const double se = rep.mc.standard_error();
  res.checks.push_back({"mc_vs_exact", rep.within, "z = " + fmt(se > 0.0 ? (rep.mc.mean - rep.formula) / se : 0.0)});
  res.report["results"] = to_json(rep);
  res.tables.push_back(estimator_csv({rep.mc}, "concat_estimate"));
}

inline void run_restarts_finite(const ExperimentConfig& c, const RunOptions& o, ExperimentResult& res) {
  const auto& cm = std::get<ConcatModel>(c.model);
  const Concatenation<RateModel> process = build_concat(c, cm, c.run.t);
  const std::size_t x0 = static_cast<std::size_t>(c.run.x0);
  const TaggedFunction f = tagged_functions(c.run.functions);
  const McOptions opt = mc_options(c, o, 0);
  const Site start{1, x0};
  std::vector<double> vals(c.run.n);
  parallel_for(c.run.n, opt.jobs, [&](std::size_t i) {
    const auto s = simulate_concatenated(process, start, RngStream(opt.master_seed, opt.stream_base + i));
    vals[i] = eval_tagged(f, path_eval(s.path, c.run.t));
  });
  const EstimatorReport mc = make_report("P[t=" + fmt(c.run.t) + "]", vals, {c.seed, 0, c.run.n});
  const double rate = cm.blocks[0].kill_rates.front();
  const double exact = restarts_closed_form(process.blocks[0].kill.model, process.transfers[0].row(0), rate, f.at(1), c.run.t, x0);
  const double se = mc.standard_error();
  res.checks.push_back({"mc_vs_formula", near(mc.mean, exact, se, c.thresholds.z),
                        "z = " + fmt(se > 0.0 ? (mc.mean - exact) / se : 0.0)});
  res.report["results"] = {{"mc", to_json(mc)}, {"formula", exact}, {"kill_rate", rate}, {"mu", process.transfers[0].row(0)}};
  res.tables.push_back(estimator_csv({mc}, "restart_estimate"));
}

inline void run_restarts_ou(const ExperimentConfig& c, const RunOptions& o, ExperimentResult& res) {
  const auto& om = std::get<OuModel>(c.model);
  Concatenation<DiffusionModel> process{
      {{{DiffusionModel::ornstein_uhlenbeck(om.theta, om.sigma, om.dt), ExpRate<double>{RateFunction<double>::constant(om.kill_rate)}}, 1}},
      {PointRevival::constant_point(om.restart_point)},
      c.run.t,
      true,
      std::nullopt};
  const McOptions opt = mc_options(c, o, 0);
  std::vector<double> vals(c.run.n);
  parallel_for(c.run.n, opt.jobs, [&](std::size_t i) {
    const auto s = simulate_concatenated(process, c.run.x0, RngStream(opt.master_seed, opt.stream_base + i));
    vals[i] = path_eval(s.path, c.run.t).point();
  });
  const EstimatorReport mc = make_report("E[X_t]", vals, {c.seed, 0, c.run.n});
  const double quad = restarts_closed_form_ou_mean(om.theta, c.run.x0, om.restart_point, om.kill_rate, c.run.t);
  const double k = om.kill_rate + om.theta;
  const double closed = std::exp(-k * c.run.t) * c.run.x0 + om.kill_rate * om.restart_point * -std::expm1(-k * c.run.t) / k;
  const double tol = std::max(c.thresholds.z * mc.standard_error(), 5.0 * om.dt);
  res.checks.push_back({"mc_vs_formula", std::abs(mc.mean - closed) <= tol,
                        "|diff| = " + fmt(std::abs(mc.mean - closed)) + ", tolerance " + fmt(tol)});
  res.checks.push_back({"quadrature_vs_closed_form", std::abs(quad - closed) <= 1e-10 * std::max(1.0, std::abs(closed)),
                        "quadrature " + fmt(quad) + ", closed form " + fmt(closed)});
  res.report["results"] = {{"mc", to_json(mc)}, {"formula_quadrature", quad}, {"formula_closed", closed}, {"tolerance", tol}};
  res.tables.push_back(estimator_csv({mc}, "restart_estimate"));
}

inline void run_renewal_gamma(const ExperimentConfig& c, const RunOptions& o, ExperimentResult& res) {
  const auto& cm = std::get<ConcatModel>(c.model);
  const Concatenation<RateModel> process = build_concat(c, cm, c.run.horizon);
  const std::size_t k = c.run.renewal_index;
  const double rate = cm.blocks[0].kill_rates.front();
  const Site start{1, static_cast<std::size_t>(c.run.x0)};
  const McOptions opt = mc_options(c, o, 0);
  std::vector<double> sig(c.run.n, -1.0);
  std::vector<char> sums_exact(c.run.n, 1);
  parallel_for(c.run.n, opt.jobs, [&](std::size_t i) {
    const auto s = simulate_concatenated(process, start, RngStream(opt.master_seed, opt.stream_base + i));
    double acc = 0.0;
    for (std::size_t j = 0; j < s.sigma.size(); ++j) {
      acc += s.lifetimes[j];
      if (acc != s.sigma[j]) sums_exact[i] = 0;
    }
    if (s.sigma.size() >= k) sig[i] = s.sigma[k - 1];
  });
  const auto censored = static_cast<std::size_t>(std::count(sig.begin(), sig.end(), -1.0));
  std::vector<double> xs;
  for (double v : sig)
    if (v >= 0.0) xs.push_back(v);
  const double shape = static_cast<double>(k);
  const KsResult ks =
      ks_statistic(xs, [&](double x) { return x <= 0.0 ? 0.0 : boost::math::gamma_p(shape, rate * x); });
  res.checks.push_back({"no_censoring", censored == 0, std::to_string(censored) + " samples without renewal " + std::to_string(k)});
  res.checks.push_back({"sigma_is_lifetime_sum", std::all_of(sums_exact.begin(), sums_exact.end(), [](char v) { return v != 0; }),
                        "renewal times equal running sums of block lifetimes"});
  res.checks.push_back({"ks_gamma", ks.p_value > c.thresholds.p_min, "p = " + fmt(ks.p_value)});
  res.report["results"] = {{"renewal_index", k}, {"rate", rate}, {"ks", to_json(ks)}, {"censored", censored}};
  res.tables.push_back(quantile_table("sigma_quantiles", xs, [&](double q) { return boost::math::gamma_p_inv(shape, q) / rate; }));
}

inline void run_generator_concat(const ExperimentConfig& c, ExperimentResult& res) {
  CsvTable points{"generator_errors", {"model", "h", "error"}, {}};
  CsvTable fits{"generator_fits", {"model", "slope", "intercept", "pass"}, {}};
  json out = json::array();
  const auto models = restore_models(c);
  for (std::size_t k = 0; k < models.size(); ++k) {
    const auto& rm = models[k];
    RngStream rng = model_rng(c, 1000 + k);
    const Vector f = to_vector(random_values(rm.model.size(), -1.0, 1.0, rng));
    std::vector<std::pair<double, double>> errors;
    for (double h : c.run.hs) errors.emplace_back(h, 0.0);
    for (std::size_t x = 0; x < rm.model.size(); ++x) {
      const auto e = concat_generator_errors(rm.model, rm.c.front(), rm.mu, f, x, c.run.hs);
      for (std::size_t i = 0; i < e.size(); ++i) errors[i].second = std::max(errors[i].second, e[i].second);
    }
    record_slope(res, points, fits, "model" + std::to_string(k), errors, c.thresholds, out);
  }
  res.report["results"] = {{"hs", c.run.hs}, {"models", std::move(out)}};
  res.tables.push_back(std::move(points));
  res.tables.push_back(std::move(fits));
}

inline void run_restore_invariant(const ExperimentConfig& c, const RunOptions& o, ExperimentResult& res) {
  const auto models = restore_models(c);
  CsvTable table{"restore_invariant", {"model", "state", "pi", "empirical"}, {}};
  json out = json::array();
  std::vector<std::vector<double>> occupation(models.size());
  std::vector<Vector> pis;
  for (const auto& rm : models) pis.push_back(restore_invariant_solve(rm.model, rm.c, rm.mu));
  parallel_for(models.size(), o.jobs, [&](std::size_t k) {
    const auto& rm = models[k];
    Concatenation<RateModel> process;
    process.blocks.push_back({exp_kill(rm.model, rm.c), 1});
    process.transfers.push_back(SiteRevival::constant(rm.mu, 1, 1));
    process.horizon = c.run.horizon;
    process.cyclic = true;
    const std::size_t x0 = std::min(static_cast<std::size_t>(c.run.x0), rm.model.size() - 1);
    const auto s = simulate_concatenated(process, Site{1, x0}, RngStream(c.seed, k));
    occupation[k] = occupation_fractions(s.path, rm.model.size());
  });
  for (std::size_t k = 0; k < models.size(); ++k) {
    const auto& rm = models[k];
    const Vector& pi = pis[k];
    const double residual = (pi.transpose() * restore_generator(rm.model, rm.c, rm.mu)).cwiseAbs().maxCoeff();
    const double tv = total_variation(occupation[k], pi);
    const std::string label = "model" + std::to_string(k);
    res.checks.push_back({"residual " + label, residual < c.run.residual_max, "||pi^T A||_inf = " + fmt(residual)});
    res.checks.push_back({"occupation " + label, tv < c.run.tv_max, "TV = " + fmt(tv)});
    for (std::size_t x = 0; x < rm.model.size(); ++x)
      table.add_row({label, std::to_string(x), fmt(pi(static_cast<Eigen::Index>(x))), fmt(occupation[k][x])});
    std::vector<double> piv(pi.data(), pi.data() + pi.size());
    out.push_back({{"model", label}, {"pi", piv}, {"occupation", occupation[k]}, {"residual", residual}, {"tv", tv},
                   {"kill_rates", rm.c}, {"mu", rm.mu}});
  }
  res.report["results"] = {{"horizon", c.run.horizon}, {"tv_max", c.run.tv_max}, {"residual_max", c.run.residual_max},
                           {"models", std::move(out)}};
  res.tables.push_back(std::move(table));
}

inline void run_markov_strata(const ExperimentConfig& c, const RunOptions& o, ExperimentResult& res) {
  const McOptions opt = mc_options(c, o, 0);
  const std::size_t x0 = static_cast<std::size_t>(c.run.x0);
  std::vector<StrataRecord> rec;
  if (const auto* cm = std::get_if<CtmcModel>(&c.model)) {
    const RateModel m = rate_model(*cm, 1);
    rec = killed_strata_records(exp_kill(m, cm->kill_rates), x0, c.run.history_time, c.run.s, c.run.t, c.run.n, opt);
  } else {
    const auto process = build_concat(c, std::get<ConcatModel>(c.model), c.run.s + c.run.t);
    rec = concat_strata_records(process, Site{1, x0}, c.run.history_time, c.run.s, c.run.t, c.run.n, opt);
  }
  const StrataReport rep = stratified_independence(rec, c.thresholds.p_min);
  CsvTable table{"strata", {"present", "n", "statistic", "dof", "p_value"}, {}};
  for (const auto& st : rep.strata) {
    res.checks.push_back({"independence present=" + std::to_string(st.present), st.test.p_value > c.thresholds.p_min,
                          "p = " + fmt(st.test.p_value)});
    table.add_row({std::to_string(st.present), std::to_string(st.n), fmt(st.test.statistic), std::to_string(st.test.dof),
                   fmt(st.test.p_value)});
  }
  res.report["results"] = to_json(rep);
  res.tables.push_back(std::move(table));
}

}  // namespace detail

/// Runs a validated configuration. Library errors raised while running are
/// recorded as a failed check rather than propagated.
inline ExperimentResult run_experiment(const ExperimentConfig& c, const RunOptions& o = {}) {
  ExperimentResult res;
  res.report = {{"schema_version", kSchemaVersion}, {"kind", c.kind},   {"name", c.name},
                {"seed", c.seed},                   {"model_type", schema::model_type(c.model)},
                {"thresholds", to_json(c.thresholds)}};
  try {
    const std::string& k = c.kind;
    if (k == "extend-check") detail::run_extend_check(c, res);
    else if (k == "lifetime-law") detail::run_lifetime_law(c, o, res);
    else if (k == "kill-semigroup") detail::run_kill_semigroup(c, o, res);
    else if (k == "generator-kill") detail::run_generator_kill(c, res);
    else if (k == "exit-joint") detail::run_exit_joint(c, o, res);
    else if (k == "revival") detail::run_revival(c, o, res);
    else if (k == "concat") detail::run_concat(c, o, res);
    else if (k == "restarts-formula") {
      if (std::holds_alternative<OuModel>(c.model)) detail::run_restarts_ou(c, o, res);
      else detail::run_restarts_finite(c, o, res);
    }
    else if (k == "renewal-gamma") detail::run_renewal_gamma(c, o, res);
    else if (k == "generator-concat") detail::run_generator_concat(c, res);
    else if (k == "restore-invariant") detail::run_restore_invariant(c, o, res);
    else if (k == "markov-strata") detail::run_markov_strata(c, o, res);
  } catch (const SchemaError&) {
    throw;
  } catch (const Error& e) {
    res.checks.push_back({"run", false, e.what()});
  }
  json tables = json::array();
  for (const auto& t : res.tables) tables.push_back(t.name + ".csv");
  res.report["checks"] = detail::check_list(res.checks);
  res.report["tables"] = std::move(tables);
  res.report["pass"] = res.pass();
  return res;
}

inline CsvTable manifest_table(const ExperimentResult& r) {
  CsvTable t{"manifest", {"check", "pass", "detail"}, {}};
  for (const auto& c : r.checks) t.add_row({c.name, c.pass ? "pass" : "fail", c.detail});
  return t;
}

}  // namespace msplice
