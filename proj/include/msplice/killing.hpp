#pragma once

// The killed process: base path plus lifetime, sent to Dead at the lifetime.
// Q_t f(x) = E_x[M_t f(X_t)] is estimated two ways (weighted by M, or by hard
// killing) and computed exactly on finite spaces.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "msplice/errors.hpp"
#include "msplice/functionals.hpp"
#include "msplice/parallel.hpp"
#include "msplice/process_models.hpp"
#include "msplice/rng.hpp"
#include "msplice/verification.hpp"

namespace msplice {

template <class Point>
struct ExpRate {
  RateFunction<Point> rate;
};

template <class Point>
struct Terminal {
  TerminalRule<Point> rule;
};

template <class Point>
using KillRule = std::variant<ExpRate<Point>, Terminal<Point>>;

template <class Model>
struct KilledProcess {
  using point_type = typename Model::point_type;
  Model model;
  KillRule<point_type> rule;
};

/// Tag consistency between a finite model and its kill rule.
inline void validate_killed(const KilledProcess<RateModel>& process) {
  if (const auto* e = std::get_if<ExpRate<Site>>(&process.rule)) {
    if (e->rate.values() && e->rate.values()->size() != process.model.size())
      throw DimensionMismatch("kill-rate vector length does not match the model");
    return;
  }
  const auto& rule = std::get<Terminal<Site>>(process.rule).rule;
  if (const auto* hit = std::get_if<HitClosedSet<Site>>(&rule))
    if (hit->target.tag != process.model.tag().id()) throw TagMismatch("terminal set belongs to another space");
}
inline void validate_killed(const KilledProcess<DiffusionModel>&) {}

template <class Point>
struct KilledSample {
  Path<Point> base;
  StoppingTime lifetime;
  Path<Point> killed;
  std::optional<Ext<Point>> exit;  // X_{tau-}; empty when censored, Dead when tau = 0
  MfTrace weight;
};

/// tau = inf{t : A_t >= E} with E ~ Exp(1) drawn from `clock`.
template <class Point>
StoppingTime sample_lifetime_exp_clock(const Path<Point>& p, const RateFunction<Point>& c, RngStream& clock) {
  const double e = clock.exponential();
  return additive_trace(p, c).first_passage(e);
}

/// X~_t = X_t for t < tau, Dead for t >= tau.
template <class Point>
JumpPath<Point> kill_path(const JumpPath<Point>& p, const StoppingTime& tau) {
  if (tau.censored()) return p;
  const double t = tau.time();
  if (!(t >= 0.0) || t > p.horizon()) throw DomainError("lifetime outside [0, horizon]");
  std::vector<JumpEvent<Point>> events;
  for (const auto& e : p.events()) {
    if (e.time >= t) break;
    events.push_back(e);
    if (e.state.is_dead()) break;
  }
  if (events.empty() || events.back().state.alive()) events.push_back({t, Ext<Point>::dead()});
  return JumpPath<Point>(std::move(events), p.horizon(), p.origin());
}

template <class Point>
Path<Point> kill_path(const Path<Point>& p, const StoppingTime& tau) {
  if (tau.censored()) return p;
  return kill_path(to_jump_path(p), tau);
}

namespace detail {

template <class Point>
std::optional<Ext<Point>> exit_point(const Path<Point>& base, const StoppingTime& tau) {
  if (tau.censored()) return std::nullopt;
  if (tau.time() == 0.0) return Ext<Point>::dead();
  return path_left_limit(base, tau.time());
}

}  // namespace detail

/// Base path from rng.lane(0); the Exp(1) clock, when used, from rng.lane(1).
template <class Model>
KilledSample<typename Model::point_type> sample_killed(const KilledProcess<Model>& process,
                                                       const typename Model::point_type& x0, double horizon,
                                                       const RngStream& rng) {
  using Point = typename Model::point_type;
  RngStream path_rng = rng.lane(0);
  Path<Point> base = sample_path(process.model, x0, horizon, path_rng);
  if (const auto* e = std::get_if<ExpRate<Point>>(&process.rule)) {
    AfTrace a = additive_trace(base, e->rate);
    RngStream clock = rng.lane(1);
    StoppingTime tau = a.first_passage(clock.exponential());
    auto exit = detail::exit_point(base, tau);
    Path<Point> killed = kill_path(base, tau);
    return {std::move(base), tau, std::move(killed), std::move(exit), MfTrace::exponential(std::move(a))};
  }
  const auto& rule = std::get<Terminal<Point>>(process.rule).rule;
  StoppingTime tau = terminal_time(base, rule);
  auto exit = detail::exit_point(base, tau);
  Path<Point> killed = kill_path(base, tau);
  return {std::move(base), tau, std::move(killed), std::move(exit), MfTrace::indicator(tau)};
}

/// A start at Dead gives the all-dead path with lifetime 0.
template <class Model>
KilledSample<typename Model::point_type> sample_killed(const KilledProcess<Model>& process,
                                                       const Ext<typename Model::point_type>& x0, double horizon,
                                                       const RngStream& rng) {
  using Point = typename Model::point_type;
  if (x0.alive()) return sample_killed(process, x0.point(), horizon, rng);
  if (!(horizon > 0.0)) throw DomainError("horizon must be positive");
  const StoppingTime zero = StoppingTime::at(0.0, horizon);
  JumpPath<Point> dead({{0.0, Ext<Point>::dead()}}, horizon);
  return {dead, zero, dead, Ext<Point>::dead(), MfTrace::indicator(zero)};
}

// --- lazily sampled blocks -----------------------------------------------

/// A killed process sampled only up to its lifetime. Uses the same draws, in
/// the same order, as sample_killed, so the two agree on every common prefix.
template <class Point>
struct BlockRun {
  std::vector<JumpEvent<Point>> events;  // alive segment starts, all before the lifetime
  StoppingTime lifetime;
  std::optional<Ext<Point>> exit;
};

inline BlockRun<Site> sample_block_run(const KilledProcess<RateModel>& process, const Site& x0, double horizon,
                                       RngStream& path_rng, RngStream& clock_rng) {
  const RateModel& m = process.model;
  if (x0.tag != m.tag().id()) throw TagMismatch("block start belongs to another state space");
  if (x0.index >= m.size()) throw DomainError("block start out of range");
  BlockRun<Site> run{{{0.0, x0}}, StoppingTime::censored_at(horizon), std::nullopt};
  const auto* exp_rule = std::get_if<ExpRate<Site>>(&process.rule);
  const TerminalRule<Site>* term = exp_rule ? nullptr : &std::get<Terminal<Site>>(process.rule).rule;
  const double level = exp_rule ? clock_rng.exponential() : 0.0;

  if (term) {
    if (const auto* d = std::get_if<DeterministicTime>(term)) {
      const double tau = std::max(0.0, d->time);
      if (tau == 0.0) {
        run.lifetime = StoppingTime::at(0.0, horizon);
        run.exit = Ext<Site>::dead();
        run.events.clear();
        return run;
      }
      // the path itself is still needed up to tau
      double t = 0.0;
      std::size_t x = x0.index;
      const double stop = std::min(tau, horizon);
      while (auto step = ctmc_step(m, x, path_rng)) {
        const double next = t + step->first;
        if (next >= stop) break;
        t = next;
        x = step->second;
        run.events.push_back({t, m.site(x)});
      }
      if (tau <= horizon) {
        run.lifetime = StoppingTime::at(tau, horizon);
        run.exit = Ext<Site>(m.site(x));
      }
      return run;
    }
    const auto& target = std::get<HitClosedSet<Site>>(*term).target;
    if (target.contains(x0)) {
      run.lifetime = StoppingTime::at(0.0, horizon);
      run.exit = Ext<Site>::dead();
      run.events.clear();
      return run;
    }
  }

  double t = 0.0, a = 0.0;
  std::size_t x = x0.index;
  for (;;) {
    const auto step = ctmc_step(m, x, path_rng);
    const double end = step ? t + step->first : horizon;
    const double seg_end = std::min(end, horizon);
    if (exp_rule) {
      const double slope = exp_rule->rate(m.site(x));
      if (slope > 0.0 && a + slope * (seg_end - t) >= level) {
        const double tau = std::min(t + (level - a) / slope, seg_end);
        run.lifetime = StoppingTime::at(tau, horizon);
        run.exit = Ext<Site>(m.site(x));
        return run;
      }
      a += slope * (seg_end - t);
    }
    if (!step || end >= horizon) return run;
    t = end;
    x = step->second;
    if (term && std::get<HitClosedSet<Site>>(*term).target.contains(m.site(x))) {
      run.lifetime = StoppingTime::at(t, horizon);
      run.exit = Ext<Site>(run.events.back().state);
      return run;
    }
    run.events.push_back({t, m.site(x)});
  }
}

inline BlockRun<double> sample_block_run(const KilledProcess<DiffusionModel>& process, double x0, double horizon,
                                         RngStream& path_rng, RngStream& clock_rng) {
  const DiffusionModel& m = process.model;
  const std::size_t steps = detail::steps_for(horizon, m.dt());
  const double grid_horizon = m.dt() * static_cast<double>(steps);
  BlockRun<double> run{{{0.0, x0}}, StoppingTime::censored_at(grid_horizon), std::nullopt};
  const auto* exp_rule = std::get_if<ExpRate<double>>(&process.rule);
  const TerminalRule<double>* term = exp_rule ? nullptr : &std::get<Terminal<double>>(process.rule).rule;
  const double level = exp_rule ? clock_rng.exponential() : 0.0;
  const auto* hit = term ? std::get_if<HitClosedSet<double>>(term) : nullptr;
  std::optional<double> fixed;
  if (term && !hit) fixed = std::max(0.0, std::get<DeterministicTime>(*term).time);

  if ((hit && hit->target.contains(x0)) || (fixed && *fixed == 0.0)) {
    run.lifetime = StoppingTime::at(0.0, grid_horizon);
    run.exit = Ext<double>::dead();
    run.events.clear();
    return run;
  }
  const double sqrt_dt = std::sqrt(m.dt());
  double x = x0, a = 0.0;
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = m.dt() * static_cast<double>(k);
    const double t_next = m.dt() * static_cast<double>(k + 1);
    if (exp_rule) {
      const double slope = exp_rule->rate(x);
      if (slope > 0.0 && a + slope * m.dt() >= level) {
        run.lifetime = StoppingTime::at(std::min(t + (level - a) / slope, t_next), grid_horizon);
        run.exit = Ext<double>(x);
        return run;
      }
      a += slope * m.dt();
    }
    if (fixed && *fixed <= t_next) {
      run.lifetime = StoppingTime::at(*fixed, grid_horizon);
      run.exit = Ext<double>(x);
      return run;
    }
    const double next = euler_step(m, x, sqrt_dt, path_rng);
    if (!std::isfinite(next)) throw PathBlowup(t_next);
    if (hit && hit->target.contains(next)) {
      run.lifetime = StoppingTime::at(t_next, grid_horizon);
      run.exit = Ext<double>(x);
      return run;
    }
    x = next;
    run.events.push_back({t_next, Ext<double>(x)});
  }
  return run;
}

// --- Monte Carlo estimators of Q_t ----------------------------------------

enum class KillMode { Weighted, Hard };

inline const char* to_string(KillMode m) { return m == KillMode::Weighted ? "weighted" : "hard"; }

/// Test function with a declared bound; |f| above the bound aborts the estimator.
template <class Point>
struct BoundedFunction {
  std::function<double(const Point&)> fn;
  double bound = 1.0;
  std::string name = "f";

  double operator()(const Point& x) const {
    const double v = fn(x);
    if (!std::isfinite(v) || std::abs(v) > bound) throw EstimatorAbort(v);
    return v;
  }
};

inline BoundedFunction<Site> site_function(std::vector<double> values, std::string name = "f") {
  double bound = 0.0;
  for (double v : values) bound = std::max(bound, std::abs(v));
  return {[values = std::move(values)](const Site& s) { return values.at(s.index); }, bound, std::move(name)};
}

struct McOptions {
  std::uint64_t master_seed = 0;
  std::uint64_t stream_base = 0;
  unsigned jobs = 1;
};

/// Reports indexed [time][function].
struct KilledMcTable {
  std::vector<double> times;
  std::vector<std::vector<EstimatorReport>> weighted;
  std::vector<std::vector<EstimatorReport>> hard;
};

/// Q_t f(x0) for every (t, f) from one set of replications over [0, max t].
/// Replication i uses stream stream_base + i.
template <class Model>
KilledMcTable killed_semigroup_mc_table(const KilledProcess<Model>& process,
                                        const std::vector<BoundedFunction<typename Model::point_type>>& fs,
                                        const std::vector<double>& times, const typename Model::point_type& x0,
                                        std::size_t n, const McOptions& opt) {
  using Point = typename Model::point_type;
  if (n < 2) throw DegenerateInput("need at least two replications");
  if (times.empty() || fs.empty()) throw DegenerateInput("need at least one time and one function");
  validate_killed(process);
  const double horizon = *std::max_element(times.begin(), times.end());
  if (!(horizon > 0.0)) throw DomainError("times must be positive");
  const std::size_t nt = times.size(), nf = fs.size();
  std::vector<double> wv(nt * nf * n), hv(nt * nf * n);
  parallel_for(n, opt.jobs, [&](std::size_t i) {
    const KilledSample<Point> s = sample_killed(process, x0, horizon, RngStream(opt.master_seed, opt.stream_base + i));
    for (std::size_t ti = 0; ti < nt; ++ti) {
      const Ext<Point> x = path_eval(s.base, times[ti]);
      const double m = s.weight.value(times[ti]);
      const bool alive = s.lifetime.after(times[ti]);
      for (std::size_t fi = 0; fi < nf; ++fi) {
        const double v = x.alive() ? fs[fi](x.point()) : 0.0;
        wv[(ti * nf + fi) * n + i] = m * v;
        hv[(ti * nf + fi) * n + i] = alive ? v : 0.0;
      }
    }
  });
  KilledMcTable out;
  out.times = times;
  const SeedProvenance seed{opt.master_seed, opt.stream_base, opt.stream_base + n};
  for (std::size_t ti = 0; ti < nt; ++ti) {
    out.weighted.emplace_back();
    out.hard.emplace_back();
    for (std::size_t fi = 0; fi < nf; ++fi) {
      const std::span<const double> w(wv.data() + (ti * nf + fi) * n, n), h(hv.data() + (ti * nf + fi) * n, n);
      const std::string key = "Q[t=" + std::to_string(times[ti]) + "," + fs[fi].name + "]";
      out.weighted.back().push_back(make_report(key, w, seed));
      out.hard.back().push_back(make_report(key, h, seed));
    }
  }
  return out;
}

template <class Model>
EstimatorReport killed_semigroup_mc(const KilledProcess<Model>& process, const BoundedFunction<typename Model::point_type>& f,
                                    double t, const typename Model::point_type& x0, std::size_t n, KillMode mode,
                                    const McOptions& opt) {
  auto table = killed_semigroup_mc_table(process, {f}, {t}, x0, n, opt);
  return mode == KillMode::Weighted ? table.weighted[0][0] : table.hard[0][0];
}

// --- lifetime / exit-point joint law --------------------------------------

struct JointHistogram {
  std::vector<double> edges;                // bins [edges[k], edges[k+1])
  std::vector<std::vector<double>> counts;  // [bin][exit state]
  double censored = 0.0;                    // lifetimes beyond the last edge
  std::size_t n = 0;
};

/// Probabilities in the same layout as JointHistogram; `censored` is 1 - total.
struct JointLaw {
  std::vector<double> edges;
  std::vector<std::vector<double>> probs;
  double censored = 0.0;
};

namespace detail {

inline void check_edges(const std::vector<double>& edges) {
  if (edges.size() < 2) throw DegenerateInput("need at least one time bin");
  if (edges.front() != 0.0) throw DegenerateInput("time bins must start at 0");
  for (std::size_t k = 1; k < edges.size(); ++k)
    if (!(edges[k] > edges[k - 1])) throw DegenerateInput("bin edges must increase");
}

inline const std::vector<double>& finite_rates(const KilledProcess<RateModel>& process) {
  const auto* e = std::get_if<ExpRate<Site>>(&process.rule);
  if (!e) throw ConfigurationError("exponential-rate killing required");
  if (!e->rate.values()) throw ConfigurationError("kill rates must be given per state");
  return *e->rate.values();
}

}  // namespace detail

inline JointHistogram exit_joint_histogram(const KilledProcess<RateModel>& process, std::size_t x0, std::size_t n,
                                           const std::vector<double>& edges, const McOptions& opt) {
  detail::check_edges(edges);
  detail::finite_rates(process);
  validate_killed(process);
  const double horizon = edges.back();
  const Site start = process.model.site(x0);
  std::vector<int> bin(n, -1), state(n, -1);
  parallel_for(n, opt.jobs, [&](std::size_t i) {
    RngStream rng(opt.master_seed, opt.stream_base + i);
    RngStream path_rng = rng.lane(0), clock = rng.lane(1);
    const BlockRun<Site> run = sample_block_run(process, start, horizon, path_rng, clock);
    if (run.lifetime.censored() || run.lifetime.time() >= horizon) return;
    const double tau = run.lifetime.time();
    const auto k = std::upper_bound(edges.begin(), edges.end(), tau) - edges.begin() - 1;
    bin[i] = static_cast<int>(k);
    state[i] = static_cast<int>(run.exit->point().index);
  });
  JointHistogram h{edges, std::vector<std::vector<double>>(edges.size() - 1, std::vector<double>(process.model.size(), 0.0)),
                   0.0, n};
  for (std::size_t i = 0; i < n; ++i) {
    if (bin[i] < 0)
      h.censored += 1.0;
    else
      h.counts[static_cast<std::size_t>(bin[i])][static_cast<std::size_t>(state[i])] += 1.0;
  }
  return h;
}

/// P[tau in I_k, X_{tau-} = y] = int_{I_k} (Q_s)_{x0,y} c(y) ds by adaptive quadrature.
inline JointLaw exit_joint_oracle(const RateModel& m, const std::vector<double>& c, std::size_t x0,
                                  const std::vector<double>& edges, double tol = 1e-10) {
  detail::check_edges(edges);
  const Matrix gen = killed_generator(m, c);
  JointLaw law{edges, {}, 1.0};
  const auto row = static_cast<Eigen::Index>(x0);
  for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
    std::vector<double> probs(m.size(), 0.0);
    for (std::size_t y = 0; y < m.size(); ++y) {
      if (c[y] == 0.0) continue;
      const auto col = static_cast<Eigen::Index>(y);
      probs[y] = c[y] * integrate([&](double s) { return uniformized_exponential(gen, s)(row, col); }, edges[k],
                                  edges[k + 1], tol);
      law.censored -= probs[y];
    }
    law.probs.push_back(std::move(probs));
  }
  law.censored = std::max(0.0, law.censored);
  return law;
}

/// Pearson test of a joint histogram against its oracle (censored cell included).
inline ChiSquareResult joint_chi_square(const JointHistogram& h, const JointLaw& law) {
  std::vector<double> counts, probs;
  for (std::size_t k = 0; k < h.counts.size(); ++k)
    for (std::size_t y = 0; y < h.counts[k].size(); ++y) {
      counts.push_back(h.counts[k][y]);
      probs.push_back(law.probs.at(k).at(y));
    }
  counts.push_back(h.censored);
  probs.push_back(law.censored);
  return chi_square(counts, probs);
}

// --- generator ------------------------------------------------------------

using GeneratorMismatch = CheckFailure<SlopeReport>;

/// Errors ||(Q_h f - f)/h - (L - diag c) f||_inf for each h, with Q_h exact.
inline std::vector<std::pair<double, double>> killed_generator_errors(const RateModel& m, const std::vector<double>& c,
                                                                      const Vector& f, const std::vector<double>& hs) {
  const Matrix gen = killed_generator(m, c);
  const Vector limit = gen * f;
  std::vector<std::pair<double, double>> pts;
  for (double h : hs) {
    const Vector diff = (uniformized_exponential(gen, h) * f - f) / h - limit;
    pts.emplace_back(h, diff.cwiseAbs().maxCoeff());
  }
  return pts;
}

/// Throws GeneratorMismatch (carrying the table) when the slope leaves the band.
inline SlopeReport killed_generator_check(const RateModel& m, const std::vector<double>& c, const Vector& f,
                                          const std::vector<double>& hs, const Thresholds& th = {}) {
  SlopeReport r = fit_slope(killed_generator_errors(m, c, f, hs), th.slope_lo, th.slope_hi);
  if (!r.pass) throw GeneratorMismatch("killed generator slope " + std::to_string(r.slope) + " outside band", r);
  return r;
}

// --- Markov property ------------------------------------------------------

/// Integer code of an extended site: index, or -1 for Dead.
inline int state_code(const Ext<Site>& x) { return x.alive() ? static_cast<int>(x.point().index) : -1; }

/// Records (X~_h, X~_s, X~_{s+t}) from killed samples for the stratified test.
inline std::vector<StrataRecord> killed_strata_records(const KilledProcess<RateModel>& process, std::size_t x0,
                                                       double history_time, double s, double t, std::size_t n,
                                                       const McOptions& opt) {
  if (!(history_time < s) || !(t > 0.0)) throw DomainError("need history time < s and t > 0");
  std::vector<StrataRecord> rec(n);
  const Site start = process.model.site(x0);
  parallel_for(n, opt.jobs, [&](std::size_t i) {
    const auto sample = sample_killed(process, start, s + t, RngStream(opt.master_seed, opt.stream_base + i));
    rec[i] = {state_code(path_eval(sample.killed, history_time)), state_code(path_eval(sample.killed, s)),
              state_code(path_eval(sample.killed, s + t))};
  });
  return rec;
}

/// exp(t L) restricted to E minus B: the taboo semigroup of killing on hitting B.
inline Matrix taboo_semigroup_exact(const RateModel& m, const SiteSet& target, double t) {
  Matrix gen = m.rates();
  for (std::size_t b : target.members) {
    const auto i = static_cast<Eigen::Index>(b);
    gen.row(i).setZero();
    gen.col(i).setZero();
  }
  // rows of B are dead from the start
  Matrix q = uniformized_exponential(gen, t);
  for (std::size_t b : target.members) q(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(b)) = 0.0;
  return q;
}

}  // namespace msplice
