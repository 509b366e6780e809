#pragma once

// Statistical toolkit shared by the theorem checks: estimator reports and
// their merge, goodness-of-fit tests, convergence-slope fits, quadrature.

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "msplice/errors.hpp"

namespace msplice {

/// Acceptance thresholds; echoed into every report that uses them.
struct Thresholds {
  double p_min = 1e-3;
  double z = 3.0;
  double slope_lo = 0.8;
  double slope_hi = 1.2;
};

inline constexpr double kCi99 = 2.5758293035489004;

struct SeedProvenance {
  std::uint64_t master_seed = 0;
  std::uint64_t stream_lo = 0;
  std::uint64_t stream_hi = 0;  // exclusive

  friend bool operator==(const SeedProvenance&, const SeedProvenance&) = default;
};

/// Monte Carlo mean with standard error. `m2` is the centered sum of squares,
/// kept so that reports merge exactly.
struct EstimatorReport {
  std::string key;
  std::uint64_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;
  SeedProvenance seed;

  double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
  double standard_error() const { return n > 1 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0; }
  std::pair<double, double> ci99() const {
    const double half = kCi99 * standard_error();
    return {mean - half, mean + half};
  }
};

inline EstimatorReport make_report(std::string key, std::span<const double> samples, SeedProvenance seed = {}) {
  EstimatorReport r;
  r.key = std::move(key);
  r.seed = seed;
  for (double x : samples) {
    ++r.n;
    const double delta = x - r.mean;
    r.mean += delta / static_cast<double>(r.n);
    r.m2 += delta * (x - r.mean);
  }
  return r;
}

/// Pairwise merge of means and centered sums of squares.
inline EstimatorReport merge_reports(const EstimatorReport& a, const EstimatorReport& b) {
  if (a.key != b.key) throw KeyMismatch("cannot merge reports '" + a.key + "' and '" + b.key + "'");
  if (b.n == 0) return a;
  if (a.n == 0) return b;
  EstimatorReport r;
  r.key = a.key;
  r.n = a.n + b.n;
  const double na = static_cast<double>(a.n), nb = static_cast<double>(b.n), n = static_cast<double>(r.n);
  const double delta = b.mean - a.mean;
  r.mean = (na * a.mean + nb * b.mean) / n;
  r.m2 = a.m2 + b.m2 + delta * delta * na * nb / n;
  r.seed.master_seed = a.seed.master_seed;
  r.seed.stream_lo = std::min(a.seed.stream_lo, b.seed.stream_lo);
  r.seed.stream_hi = std::max(a.seed.stream_hi, b.seed.stream_hi);
  return r;
}

/// |a - b| <= z * sqrt(se_a^2 + se_b^2).
inline bool agree_within(const EstimatorReport& a, const EstimatorReport& b, double z) {
  const double se = std::hypot(a.standard_error(), b.standard_error());
  return std::abs(a.mean - b.mean) <= z * se;
}

inline bool agree_within(const EstimatorReport& a, double exact, double z) {
  return std::abs(a.mean - exact) <= z * a.standard_error();
}

// --- goodness of fit ------------------------------------------------------

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

/// Kolmogorov limit survival function Q(lambda) = 2 sum (-1)^{k-1} e^{-2 k^2 lambda^2}.
inline double kolmogorov_survival(double lambda) {
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-18) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

/// One-sample KS distance with the Stephens small-sample correction for the asymptotic p.
inline KsResult ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
  if (samples.size() < 30) throw DegenerateInput("KS test needs at least 30 samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  const double sqrt_n = std::sqrt(n);
  return {d, kolmogorov_survival((sqrt_n + 0.12 + 0.11 / sqrt_n) * d), samples.size()};
}

/// Two-sample KS distance with the asymptotic p for effective size n m / (n + m).
inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.size() < 30 || b.size() < 30) throw DegenerateInput("KS test needs at least 30 samples per side");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  return {d, kolmogorov_survival((ne + 0.12 + 0.11 / ne) * d), a.size() + b.size()};
}

struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
  std::size_t bins_used = 0;
};

inline double chi_square_survival(double stat, int dof) {
  if (dof <= 0) return 1.0;
  if (!std::isfinite(stat)) return 0.0;
  return boost::math::gamma_q(0.5 * dof, 0.5 * stat);
}

/// Pearson goodness of fit. Bins with zero probability and zero count are
/// dropped; bins with expected count below 5 are pooled smallest-first.
inline ChiSquareResult chi_square(std::span<const double> counts, std::span<const double> probs) {
  if (counts.size() != probs.size() || counts.empty()) throw DegenerateInput("counts/probs size mismatch");
  const double total_p = std::accumulate(probs.begin(), probs.end(), 0.0);
  if (std::abs(total_p - 1.0) > 1e-8) throw DegenerateInput("probabilities do not sum to one");
  const double n = std::accumulate(counts.begin(), counts.end(), 0.0);
  if (n <= 0.0) throw DegenerateInput("no observations");

  std::vector<std::pair<double, double>> bins;  // (expected, observed)
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (probs[i] < 0.0) throw DegenerateInput("negative probability");
    if (probs[i] == 0.0 && counts[i] == 0.0) continue;
    bins.emplace_back(probs[i] * n, counts[i]);
  }
  std::sort(bins.begin(), bins.end());
  while (bins.size() > 1 && bins.front().first < 5.0) {
    bins[1].first += bins[0].first;
    bins[1].second += bins[0].second;
    bins.erase(bins.begin());
    std::sort(bins.begin(), bins.end());
  }
  ChiSquareResult r;
  r.bins_used = bins.size();
  for (const auto& [e, o] : bins) {
    if (e == 0.0) {
      r.statistic = std::numeric_limits<double>::infinity();
      break;
    }
    r.statistic += (o - e) * (o - e) / e;
  }
  r.dof = static_cast<int>(bins.size()) - 1;
  r.p_value = chi_square_survival(r.statistic, r.dof);
  return r;
}

/// Pearson independence test on a contingency table (rows x cols). Empty rows
/// and columns are dropped; columns whose smallest expected count is below 5
/// are pooled into their neighbour.
inline ChiSquareResult chi_square_independence(std::vector<std::vector<double>> table) {
  std::erase_if(table, [](const auto& row) { return std::accumulate(row.begin(), row.end(), 0.0) == 0.0; });
  if (table.size() < 2) return {0.0, 0, 1.0, table.size()};
  const std::size_t cols = table.front().size();
  std::vector<double> col_tot(cols, 0.0), row_tot;
  double total = 0.0;
  for (const auto& row : table) {
    row_tot.push_back(std::accumulate(row.begin(), row.end(), 0.0));
    for (std::size_t j = 0; j < cols; ++j) col_tot[j] += row[j];
    total += row_tot.back();
  }
  const double min_row = *std::min_element(row_tot.begin(), row_tot.end());
  // column groups, pooled in order of increasing column total
  std::vector<std::vector<std::size_t>> groups;
  std::vector<double> group_tot;
  for (std::size_t j = 0; j < cols; ++j)
    if (col_tot[j] > 0.0) {
      groups.push_back({j});
      group_tot.push_back(col_tot[j]);
    }
  while (groups.size() > 1) {
    const auto smallest = static_cast<std::size_t>(
        std::min_element(group_tot.begin(), group_tot.end()) - group_tot.begin());
    if (group_tot[smallest] * min_row / total >= 5.0) break;
    std::size_t partner = smallest == 0 ? 1 : smallest - 1;
    if (smallest + 1 < groups.size() && group_tot[smallest + 1] < group_tot[partner]) partner = smallest + 1;
    groups[partner].insert(groups[partner].end(), groups[smallest].begin(), groups[smallest].end());
    group_tot[partner] += group_tot[smallest];
    groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(smallest));
    group_tot.erase(group_tot.begin() + static_cast<std::ptrdiff_t>(smallest));
  }
  ChiSquareResult r;
  r.bins_used = groups.size();
  for (std::size_t i = 0; i < table.size(); ++i)
    for (std::size_t g = 0; g < groups.size(); ++g) {
      double obs = 0.0;
      for (std::size_t j : groups[g]) obs += table[i][j];
      const double exp = row_tot[i] * group_tot[g] / total;
      r.statistic += (obs - exp) * (obs - exp) / exp;
    }
  r.dof = static_cast<int>((table.size() - 1) * (groups.size() - 1));
  r.p_value = chi_square_survival(r.statistic, r.dof);
  return r;
}

/// One conditional-independence record: history stratum, present state, future state.
struct StrataRecord {
  int history;
  int present;
  int future;
};

struct StratumTest {
  int present = 0;
  std::size_t n = 0;
  ChiSquareResult test;
};

struct StrataReport {
  std::vector<StratumTest> strata;
  double p_min = 1e-3;
  bool pass = true;
};

/// For each present state y, tests independence of the future state from the
/// history stratum given X_s = y. Strata rows with fewer than `min_row`
/// records are discarded.
inline StrataReport stratified_independence(std::span<const StrataRecord> records, double p_min,
                                            std::size_t min_row = 30) {
  std::map<int, std::map<int, std::map<int, double>>> counts;  // present -> history -> future
  std::map<int, int> future_index;
  for (const auto& r : records) {
    counts[r.present][r.history][r.future] += 1.0;
    future_index.emplace(r.future, 0);
  }
  int idx = 0;
  for (auto& [k, v] : future_index) v = idx++;

  StrataReport out;
  out.p_min = p_min;
  for (const auto& [present, by_history] : counts) {
    std::vector<std::vector<double>> table;
    std::size_t n = 0;
    for (const auto& [history, by_future] : by_history) {
      std::vector<double> row(future_index.size(), 0.0);
      double tot = 0.0;
      for (const auto& [future, c] : by_future) {
        row[static_cast<std::size_t>(future_index[future])] = c;
        tot += c;
      }
      if (tot < static_cast<double>(min_row)) continue;
      n += static_cast<std::size_t>(tot);
      table.push_back(std::move(row));
    }
    StratumTest st{present, n, chi_square_independence(std::move(table))};
    out.pass = out.pass && st.test.p_value > p_min;
    out.strata.push_back(st);
  }
  return out;
}

// --- convergence slopes ---------------------------------------------------

struct SlopeReport {
  std::vector<std::pair<double, double>> points;  // (h, error), h strictly decreasing
  std::vector<double> dropped;                    // h values whose error was exactly zero
  double slope = 0.0;
  double intercept = 0.0;
  double band_lo = 0.8;
  double band_hi = 1.2;
  bool pass = false;
};

/// Least-squares slope of log(error) against log(h).
inline SlopeReport fit_slope(const std::vector<std::pair<double, double>>& points, double band_lo = 0.8,
                             double band_hi = 1.2) {
  SlopeReport r;
  r.band_lo = band_lo;
  r.band_hi = band_hi;
  for (std::size_t i = 1; i < points.size(); ++i)
    if (!(points[i].first < points[i - 1].first)) throw DegenerateInput("step sizes must strictly decrease");
  for (const auto& [h, e] : points) {
    if (!(h > 0.0)) throw DegenerateInput("step sizes must be positive");
    if (e == 0.0) {
      r.dropped.push_back(h);
      continue;
    }
    if (!(e > 0.0)) throw DegenerateInput("errors must be positive");
    r.points.emplace_back(h, e);
  }
  if (r.points.size() < 3) throw DegenerateInput("slope fit needs at least three nonzero errors");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(r.points.size());
  for (const auto& [h, e] : r.points) {
    const double x = std::log(h), y = std::log(e);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  r.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  r.intercept = (sy - r.slope * sx) / n;
  r.pass = r.slope >= band_lo && r.slope <= band_hi;
  return r;
}

// --- quadrature -----------------------------------------------------------

/// Adaptive 31-point Gauss-Kronrod on [a, b], evaluated on the unit interval
/// so that the relative tolerance stays above the rule's roundoff floor on short ranges.
inline double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-12) {
  if (a == b) return 0.0;
  const double w = b - a;
  const auto g = [&](double u) { return f(a + w * u); };
  return w * boost::math::quadrature::gauss_kronrod<double, 31>::integrate(g, 0.0, 1.0, 15, tol);
}

}  // namespace msplice
