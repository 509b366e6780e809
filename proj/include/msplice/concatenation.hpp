#pragma once

// Concatenation of killed blocks: each block runs until its lifetime, the
// exit point X_{sigma-} is handed to a revival kernel, and the next block
// starts from the drawn revival point X_sigma.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "msplice/errors.hpp"
#include "msplice/extended_state.hpp"
#include "msplice/functionals.hpp"
#include "msplice/killing.hpp"
#include "msplice/parallel.hpp"
#include "msplice/process_models.hpp"
#include "msplice/verification.hpp"

namespace msplice {

/// Revival kernel between finite spaces: a row-stochastic matrix indexed by
/// exit state, or one distribution used for every exit state.
class SiteRevival {
 public:
  static SiteRevival state_dependent(std::vector<std::vector<double>> rows, int from_tag, int to_tag) {
    return SiteRevival(std::move(rows), from_tag, to_tag, false);
  }
  static SiteRevival constant(std::vector<double> mu, int from_tag, int to_tag) {
    return SiteRevival({std::move(mu)}, from_tag, to_tag, true);
  }
  /// Revive at the image of the exit state under `image`.
  static SiteRevival mapping(const std::vector<std::size_t>& image, std::size_t target_size, int from_tag,
                             int to_tag) {
    std::vector<std::vector<double>> rows(image.size(), std::vector<double>(target_size, 0.0));
    for (std::size_t i = 0; i < image.size(); ++i) rows[i].at(image[i]) = 1.0;
    return state_dependent(std::move(rows), from_tag, to_tag);
  }

  bool is_constant() const noexcept { return constant_; }
  int from_tag() const noexcept { return from_tag_; }
  int to_tag() const noexcept { return to_tag_; }
  std::size_t target_size() const noexcept { return rows_.front().size(); }
  std::size_t row_count() const noexcept { return rows_.size(); }

  const std::vector<double>& row(std::size_t exit_index) const {
    const std::size_t r = constant_ ? 0 : exit_index;
    if (r >= rows_.size())
      throw ConfigurationError("revival kernel has no row for exit state " + std::to_string(exit_index));
    return rows_[r];
  }

  Site draw(const Site& exit, RngStream& rng) const {
    if (exit.tag != from_tag_)
      throw ConfigurationError("exit state tag " + std::to_string(exit.tag) + " does not match revival kernel");
    return Site{to_tag_, rng.categorical(row(exit.index))};
  }

  /// (mu g)(exit) for g on the target space.
  double apply(std::size_t exit_index, const Vector& g) const {
    const auto& w = row(exit_index);
    if (static_cast<std::size_t>(g.size()) != w.size()) throw DimensionMismatch("revival target size mismatch");
    double s = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) s += w[j] * g(static_cast<Eigen::Index>(j));
    return s;
  }

 private:
  SiteRevival(std::vector<std::vector<double>> rows, int from_tag, int to_tag, bool constant)
      : rows_(std::move(rows)), from_tag_(from_tag), to_tag_(to_tag), constant_(constant) {
    if (rows_.empty() || rows_.front().empty()) throw InvalidKernel("empty revival kernel");
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      if (rows_[i].size() != rows_.front().size()) throw DimensionMismatch("ragged revival kernel");
      double sum = 0.0;
      for (double v : rows_[i]) {
        if (!(v >= 0.0)) throw InvalidKernel("revival kernel entries must be nonnegative");
        sum += v;
      }
      if (std::abs(sum - 1.0) > kRowTolerance)
        throw InvalidKernel("revival kernel row " + std::to_string(i) + " does not sum to one");
    }
  }

  std::vector<std::vector<double>> rows_;
  int from_tag_, to_tag_;
  bool constant_;
};

/// Revival kernel on the real line: a sampler of the revival point given the exit point.
class PointRevival {
 public:
  using Sampler = std::function<double(double, RngStream&)>;

  explicit PointRevival(Sampler sampler, bool constant = false) : sampler_(std::move(sampler)), constant_(constant) {}
  static PointRevival constant_point(double x) {
    return PointRevival([x](double, RngStream&) { return x; }, true);
  }

  bool is_constant() const noexcept { return constant_; }
  double draw(double exit, RngStream& rng) const { return sampler_(exit, rng); }

 private:
  Sampler sampler_;
  bool constant_;
};

template <class Point>
using RevivalKernel = std::conditional_t<std::is_same_v<Point, Site>, SiteRevival, PointRevival>;

template <class Model>
struct ConcatBlock {
  KilledProcess<Model> kill;
  int tag = 0;
};

/// Ordered blocks joined by revival kernels. In cyclic (restore) mode a single
/// block and a single kernel repeat; `max_blocks` then bounds the number of
/// lifetimes, after which the process is Dead.
template <class Model>
struct Concatenation {
  using point_type = typename Model::point_type;
  std::vector<ConcatBlock<Model>> blocks;
  std::vector<RevivalKernel<point_type>> transfers;
  double horizon = 1.0;
  bool cyclic = false;
  std::optional<std::size_t> max_blocks;
};

template <class Model>
void validate_concatenation(const Concatenation<Model>& process) {
  if (process.blocks.empty()) throw ConfigurationError("concatenation needs at least one block");
  if (!(process.horizon > 0.0)) throw ConfigurationError("horizon must be positive");
  if (process.cyclic) {
    if (process.blocks.size() != 1 || process.transfers.size() != 1)
      throw ConfigurationError("cyclic mode takes exactly one block and one revival kernel");
  } else if (process.transfers.size() + 1 != process.blocks.size()) {
    throw ConfigurationError("need one revival kernel between each pair of consecutive blocks");
  }
  for (std::size_t i = 0; i < process.blocks.size(); ++i) {
    validate_killed(process.blocks[i].kill);
    if (i > 0 && process.blocks[i].tag == process.blocks[i - 1].tag)
      throw ConfigurationError("consecutive blocks must carry distinct state-space tags");
  }
  if constexpr (std::is_same_v<Model, RateModel>) {
    for (std::size_t i = 0; i < process.blocks.size(); ++i)
      if (process.blocks[i].tag != process.blocks[i].kill.model.tag().id())
        throw ConfigurationError("block tag differs from its model's state space");
    for (std::size_t i = 0; i < process.transfers.size(); ++i) {
      const auto& from = process.blocks[i].kill.model;
      const auto& to = process.blocks[process.cyclic ? 0 : i + 1].kill.model;
      const auto& mu = process.transfers[i];
      if (mu.from_tag() != from.tag().id() || mu.to_tag() != to.tag().id())
        throw ConfigurationError("revival kernel " + std::to_string(i) + " does not join consecutive blocks");
      if (!mu.is_constant() && mu.row_count() != from.size())
        throw ConfigurationError("revival kernel " + std::to_string(i) + " is missing exit-state rows");
      if (mu.target_size() != to.size()) throw ConfigurationError("revival kernel target size mismatch");
    }
  }
}

template <class Point>
struct ConcatSample {
  JumpPath<Point> path;
  std::vector<double> sigma;       // renewal times sigma_1, sigma_2, ...
  std::vector<double> lifetimes;   // per-block lifetimes; sigma is their running sum
  std::vector<Point> exits;        // X_{sigma_k -}
  std::vector<Point> revivals;     // X_{sigma_k}; one fewer than exits if the process died
  std::size_t blocks_used = 0;
};

/// Block k draws its path from lane 3k, its clock from lane 3k+1 and its
/// revival point from lane 3k+2 of `rng`.
template <class Model>
ConcatSample<typename Model::point_type> simulate_concatenated(const Concatenation<Model>& process,
                                                               const typename Model::point_type& x0,
                                                               const RngStream& rng) {
  using Point = typename Model::point_type;
  validate_concatenation(process);
  std::vector<JumpEvent<Point>> events;
  ConcatSample<Point> out{JumpPath<Point>({{0.0, x0}}, process.horizon), {}, {}, {}, {}, 0};
  const double horizon = process.horizon;
  double t0 = 0.0;
  Point x = x0;
  for (std::size_t k = 0;; ++k) {
    const ConcatBlock<Model>& block = process.blocks[process.cyclic ? 0 : k];
    RngStream path_rng = rng.lane(3 * k), clock_rng = rng.lane(3 * k + 1);
    const double remaining = horizon - t0;
    BlockRun<Point> run = sample_block_run(block.kill, x, remaining, path_rng, clock_rng);
    ++out.blocks_used;
    const bool survives = run.lifetime.censored() || run.lifetime.time() > remaining;
    const double cut = survives ? remaining : run.lifetime.time();
    for (const auto& e : run.events) {
      if (e.time > cut || (!survives && e.time >= cut)) break;
      const double abs_t = t0 + e.time;
      if (!events.empty() && abs_t <= events.back().time) continue;
      if (abs_t > horizon) break;
      events.push_back({abs_t, e.state});
    }
    if (survives) break;

    const double tau = run.lifetime.time();
    if (tau == 0.0)
      throw ZeroLifetime("block " + std::to_string(k) + " has zero lifetime from its start point");
    const double sigma = t0 + tau;
    out.lifetimes.push_back(tau);
    out.sigma.push_back(sigma);
    out.exits.push_back(run.exit->point());

    const bool exhausted = process.cyclic ? (process.max_blocks && out.blocks_used >= *process.max_blocks)
                                       : (k + 1 == process.blocks.size());
    if (exhausted) {
      if (!events.empty() && events.back().time >= sigma) events.pop_back();
      events.push_back({sigma, Ext<Point>::dead()});
      break;
    }
    RngStream revival_rng = rng.lane(3 * k + 2);
    const auto& mu = process.transfers[process.cyclic ? 0 : k];
    x = mu.draw(out.exits.back(), revival_rng);
    out.revivals.push_back(x);
    if (!events.empty() && events.back().time >= sigma) events.pop_back();
    events.push_back({sigma, Ext<Point>(x)});
    t0 = sigma;
  }
  out.path = JumpPath<Point>(std::move(events), horizon);
  return out;
}

// --- revival law ----------------------------------------------------------

struct RevivalRow {
  std::size_t exit_state = 0;
  std::size_t n = 0;
  bool skipped = false;
  ChiSquareResult test;
};

struct RevivalReport {
  std::size_t renewal_index = 1;
  std::vector<RevivalRow> rows;
  double p_min = 1e-3;
  bool pass = true;
};

/// Per exit state z, compares revival points X_{sigma_k} among samples with
/// X_{sigma_k -} = z against mu(z, .). Rows with fewer than 30 samples are skipped.
inline RevivalReport revival_conditional_test(const std::vector<ConcatSample<Site>>& samples, std::size_t k,
                                              const SiteRevival& mu, double p_min = 1e-3,
                                              std::size_t min_samples = 30) {
  if (k == 0) throw DomainError("renewal index starts at 1");
  std::map<std::size_t, std::vector<double>> counts;
  for (const auto& s : samples) {
    if (s.revivals.size() < k) continue;
    auto& row = counts[s.exits[k - 1].index];
    if (row.empty()) row.assign(mu.target_size(), 0.0);
    row.at(s.revivals[k - 1].index) += 1.0;
  }
  RevivalReport rep;
  rep.renewal_index = k;
  rep.p_min = p_min;
  for (const auto& [z, row] : counts) {
    RevivalRow r;
    r.exit_state = z;
    for (double c : row) r.n += static_cast<std::size_t>(c);
    if (r.n < min_samples) {
      r.skipped = true;
    } else {
      r.test = chi_square(row, mu.row(z));
      rep.pass = rep.pass && r.test.p_value > p_min;
    }
    rep.rows.push_back(r);
  }
  return rep;
}

// --- closed forms for P_t -------------------------------------------------

/// e^{-ct} (K_t f)(x) + c int_0^t e^{-cs} (mu K_s f) ds.
inline double restarts_formula(double c, double t, double kt_f_at_x, const std::function<double(double)>& mu_ks_f,
                               double tol = 1e-12) {
  if (!(c > 0.0)) throw DomainError("restart rate must be positive");
  if (!(t >= 0.0)) throw DomainError("time must be nonnegative");
  if (t == 0.0) return kt_f_at_x;
  const double integral = integrate([&](double s) { return std::exp(-c * s) * mu_ks_f(s); }, 0.0, t, tol);
  return std::exp(-c * t) * kt_f_at_x + c * integral;
}

/// P_t f(x0) for a finite chain restarted from mu at constant rate c.
inline double restarts_closed_form(const RateModel& m, const std::vector<double>& mu, double c, const Vector& f,
                                   double t, std::size_t x0) {
  if (mu.size() != m.size() || static_cast<std::size_t>(f.size()) != m.size())
    throw DimensionMismatch("restart distribution / function size mismatch");
  Vector mu_v(static_cast<Eigen::Index>(mu.size()));
  for (std::size_t j = 0; j < mu.size(); ++j) mu_v(static_cast<Eigen::Index>(j)) = mu[j];
  const double kt = (uniformized_exponential(m.rates(), t) * f)(static_cast<Eigen::Index>(x0));
  return restarts_formula(c, t, kt, [&](double s) { return mu_v.dot(uniformized_exponential(m.rates(), s) * f); });
}

/// P_t id(x0) for an OU process (K_s id(x) = x e^{-theta s}) restarted at a fixed point.
inline double restarts_closed_form_ou_mean(double theta, double x0, double restart_point, double c, double t) {
  return restarts_formula(c, t, x0 * std::exp(-theta * t),
                          [&](double s) { return restart_point * std::exp(-theta * s); });
}

/// Two-block P_t f(x0) = Q1_t f1(x0) + int_0^t sum_y (Q1_s)_{x0,y} c1(y) (mu_y Q2_{t-s} f2) ds.
struct TwoBlockModel {
  RateModel first;
  std::vector<double> first_rates;
  SiteRevival revival;
  RateModel second;
  std::vector<double> second_rates;
};

inline double two_block_semigroup(const TwoBlockModel& tb, const Vector& f1, const Vector& f2, double t,
                                  std::size_t x0, double tol = 1e-12) {
  const Matrix g1 = killed_generator(tb.first, tb.first_rates);
  const Matrix g2 = killed_generator(tb.second, tb.second_rates);
  const auto row = static_cast<Eigen::Index>(x0);
  const double direct = (uniformized_exponential(g1, t) * f1)(row);
  if (t == 0.0) return direct;
  const auto integrand = [&](double s) {
    const Matrix q1 = uniformized_exponential(g1, s);
    const Vector q2f = uniformized_exponential(g2, t - s) * f2;
    double acc = 0.0;
    for (std::size_t y = 0; y < tb.first.size(); ++y) {
      const double cy = tb.first_rates[y];
      if (cy == 0.0) continue;
      acc += q1(row, static_cast<Eigen::Index>(y)) * cy * tb.revival.apply(y, q2f);
    }
    return acc;
  };
  return direct + integrate(integrand, 0.0, t, tol);
}

// --- Monte Carlo semigroup check ------------------------------------------

/// Function on the concatenation space: values per state-space tag; Dead maps to 0.
using TaggedFunction = std::map<int, Vector>;

inline double eval_tagged(const TaggedFunction& f, const Ext<Site>& x) {
  if (x.is_dead()) return 0.0;
  const auto it = f.find(x.point().tag);
  if (it == f.end()) throw TagMismatch("function undefined on state space " + std::to_string(x.point().tag));
  return it->second(static_cast<Eigen::Index>(x.point().index));
}

struct ConcatSemigroupReport {
  EstimatorReport mc;
  double formula = 0.0;
  double z = 3.0;
  bool within = false;
  std::optional<StrataReport> strata;
  bool pass = false;
};

using TheoremCheckFailure = CheckFailure<ConcatSemigroupReport>;

/// Integer code of a concatenation state: tag * 1000 + index, -1 for Dead.
inline int concat_state_code(const Ext<Site>& x) {
  return x.alive() ? x.point().tag * 1000 + static_cast<int>(x.point().index) : -1;
}

inline std::vector<StrataRecord> concat_strata_records(Concatenation<RateModel> process, const Site& x0, double history_time,
                                                       double s, double t, std::size_t n, const McOptions& opt) {
  if (!(history_time < s) || !(t > 0.0)) throw DomainError("need history time < s and t > 0");
  process.horizon = s + t;
  std::vector<StrataRecord> rec(n);
  parallel_for(n, opt.jobs, [&](std::size_t i) {
    const auto smp = simulate_concatenated(process, x0, RngStream(opt.master_seed, opt.stream_base + i));
    rec[i] = {concat_state_code(path_eval(smp.path, history_time)), concat_state_code(path_eval(smp.path, s)),
              concat_state_code(path_eval(smp.path, s + t))};
  });
  return rec;
}

/// Exact P_t f(x0) for a finite restore chain with constant c and mu, or a two-block chain.
inline double concat_exact(const Concatenation<RateModel>& process, const TaggedFunction& f, double t, std::size_t x0) {
  validate_concatenation(process);
  const auto& b0 = process.blocks.front();
  const auto& rate0 = detail::finite_rates(b0.kill);
  if (process.cyclic) {
    if (std::adjacent_find(rate0.begin(), rate0.end(), std::not_equal_to<>()) != rate0.end())
      throw ConfigurationError("closed form needs a constant kill rate");
    const double c = rate0.front();
    if (!process.transfers[0].is_constant() || process.max_blocks)
      throw ConfigurationError("closed form needs an unbounded restore chain with constant revival");
    return restarts_closed_form(b0.kill.model, process.transfers[0].row(0), c, f.at(b0.tag), t, x0);
  }
  if (process.blocks.size() == 1) {
    const Matrix q = uniformized_exponential(killed_generator(b0.kill.model, rate0), t);
    return (q * f.at(b0.tag))(static_cast<Eigen::Index>(x0));
  }
  if (process.blocks.size() != 2) throw ConfigurationError("exact P_t implemented for one or two blocks");
  const auto& b1 = process.blocks[1];
  TwoBlockModel tb{b0.kill.model, rate0, process.transfers[0], b1.kill.model, detail::finite_rates(b1.kill)};
  return two_block_semigroup(tb, f.at(b0.tag), f.at(b1.tag), t, x0);
}

/// MC estimate of E_x0[f(X_t)] against the exact P_t f(x0); optionally also
/// the stratified Markov test at (history_time, s, t_future). Throws
/// TheoremCheckFailure when either fails.
struct StrataOptions {
  double history_time;
  double s;
  double t;
};

inline ConcatSemigroupReport concat_semigroup_check(Concatenation<RateModel> process, const TaggedFunction& f, double t,
                                                    std::size_t x0, std::size_t n, const McOptions& opt,
                                                    const Thresholds& th = {},
                                                    std::optional<StrataOptions> strata = std::nullopt) {
  if (n < 2) throw DegenerateInput("need at least two replications");
  process.horizon = t;
  validate_concatenation(process);
  const Site start{process.blocks.front().tag, x0};
  std::vector<double> vals(n);
  parallel_for(n, opt.jobs, [&](std::size_t i) {
    const auto smp = simulate_concatenated(process, start, RngStream(opt.master_seed, opt.stream_base + i));
    vals[i] = eval_tagged(f, path_eval(smp.path, t));
  });
  ConcatSemigroupReport rep;
  rep.mc = make_report("P[t=" + std::to_string(t) + "]", vals, {opt.master_seed, opt.stream_base, opt.stream_base + n});
  rep.formula = concat_exact(process, f, t, x0);
  rep.z = th.z;
  rep.within = agree_within(rep.mc, rep.formula, th.z);
  rep.pass = rep.within;
  if (strata) {
    McOptions sopt = opt;
    sopt.stream_base = opt.stream_base + n;
    const auto rec = concat_strata_records(process, start, strata->history_time, strata->s, strata->t, n, sopt);
    rep.strata = stratified_independence(rec, th.p_min);
    rep.pass = rep.pass && rep.strata->pass;
  }
  if (!rep.pass)
    throw TheoremCheckFailure("concatenated semigroup check failed: MC " + std::to_string(rep.mc.mean) +
                                  " vs formula " + std::to_string(rep.formula),
                              rep);
  return rep;
}

// --- generator ------------------------------------------------------------

/// Restore chain with constant rate: |(P_h f - f)/h (x0) - [L f + c (mu f - f)](x0)| per h.
inline std::vector<std::pair<double, double>> concat_generator_errors(const RateModel& m, double c,
                                                                      const std::vector<double>& mu, const Vector& f,
                                                                      std::size_t x0, const std::vector<double>& hs) {
  const auto i = static_cast<Eigen::Index>(x0);
  double mu_f = 0.0;
  for (std::size_t j = 0; j < mu.size(); ++j) mu_f += mu[j] * f(static_cast<Eigen::Index>(j));
  const double limit = (m.rates() * f)(i) + c * (mu_f - f(i));
  std::vector<std::pair<double, double>> pts;
  for (double h : hs) {
    const double ph = restarts_closed_form(m, mu, c, f, h, x0);
    pts.emplace_back(h, std::abs((ph - f(i)) / h - limit));
  }
  return pts;
}

/// Two-block chain: limit is ((L1 - c1) f1)(x0) + c1(x0) (mu f2)(x0).
inline std::vector<std::pair<double, double>> concat_generator_errors(const TwoBlockModel& tb, const Vector& f1,
                                                                      const Vector& f2, std::size_t x0,
                                                                      const std::vector<double>& hs) {
  const auto i = static_cast<Eigen::Index>(x0);
  const double limit = (killed_generator(tb.first, tb.first_rates) * f1)(i) +
                       tb.first_rates[x0] * tb.revival.apply(x0, f2);
  std::vector<std::pair<double, double>> pts;
  for (double h : hs) {
    const double ph = two_block_semigroup(tb, f1, f2, h, x0);
    pts.emplace_back(h, std::abs((ph - f1(i)) / h - limit));
  }
  return pts;
}

inline SlopeReport concat_generator_check(const RateModel& m, double c, const std::vector<double>& mu,
                                          const Vector& f, std::size_t x0, const std::vector<double>& hs,
                                          const Thresholds& th = {}) {
  SlopeReport r = fit_slope(concat_generator_errors(m, c, mu, f, x0, hs), th.slope_lo, th.slope_hi);
  if (!r.pass) throw GeneratorMismatch("concatenated generator slope " + std::to_string(r.slope), r);
  return r;
}

inline SlopeReport concat_generator_check(const TwoBlockModel& tb, const Vector& f1, const Vector& f2, std::size_t x0,
                                          const std::vector<double>& hs, const Thresholds& th = {}) {
  SlopeReport r = fit_slope(concat_generator_errors(tb, f1, f2, x0, hs), th.slope_lo, th.slope_hi);
  if (!r.pass) throw GeneratorMismatch("concatenated generator slope " + std::to_string(r.slope), r);
  return r;
}

// --- restore chains -------------------------------------------------------

/// L + diag(c)(1 mu^T - I): generator of the restore chain projected to E.
inline Matrix restore_generator(const RateModel& m, const std::vector<double>& c, const std::vector<double>& mu) {
  const auto n = static_cast<Eigen::Index>(m.size());
  if (c.size() != m.size() || mu.size() != m.size()) throw DimensionMismatch("restore model size mismatch");
  Matrix a = m.rates();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) += c[static_cast<std::size_t>(i)] * mu[static_cast<std::size_t>(j)];
    a(i, i) -= c[static_cast<std::size_t>(i)];
  }
  return a;
}

inline bool irreducible(const Matrix& gen) {
  const auto n = gen.rows();
  const auto reach_all = [&](bool forward) {
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::vector<Eigen::Index> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      const auto i = stack.back();
      stack.pop_back();
      for (Eigen::Index j = 0; j < n; ++j) {
        const double rate = forward ? gen(i, j) : gen(j, i);
        if (j != i && rate > 0.0 && !seen[static_cast<std::size_t>(j)]) {
          seen[static_cast<std::size_t>(j)] = 1;
          stack.push_back(j);
        }
      }
    }
    return std::all_of(seen.begin(), seen.end(), [](char s) { return s != 0; });
  };
  return reach_all(true) && reach_all(false);
}

/// Invariant law pi of the restore chain: pi^T A = 0, sum pi = 1.
inline Vector restore_invariant_solve(const RateModel& m, const std::vector<double>& c, const std::vector<double>& mu) {
  const Matrix a = restore_generator(m, c, mu);
  if (!irreducible(a)) throw NoUniqueInvariant("restore chain is reducible");
  const auto n = a.rows();
  Matrix sys = a.transpose();
  sys.row(n - 1).setOnes();
  Vector rhs = Vector::Zero(n);
  rhs(n - 1) = 1.0;
  Vector pi = sys.fullPivLu().solve(rhs);
  for (Eigen::Index i = 0; i < n; ++i)
    if (pi(i) < 0.0) {
      if (pi(i) < -1e-12) throw NoUniqueInvariant("invariant solve produced a negative mass");
      pi(i) = 0.0;
    }
  pi /= pi.sum();
  return pi;
}

/// Fraction of [0, horizon] spent in each alive index of a finite path.
inline std::vector<double> occupation_fractions(const JumpPath<Site>& p, std::size_t size) {
  std::vector<double> occ(size, 0.0);
  const auto& ev = p.events();
  for (std::size_t i = 0; i < ev.size(); ++i) {
    const double end = i + 1 < ev.size() ? ev[i + 1].time : p.horizon();
    if (ev[i].state.alive()) occ.at(ev[i].state.point().index) += end - ev[i].time;
  }
  for (double& v : occ) v /= p.horizon();
  return occ;
}

inline double total_variation(const std::vector<double>& p, const Vector& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q(static_cast<Eigen::Index>(i)));
  return 0.5 * s;
}

}  // namespace msplice
