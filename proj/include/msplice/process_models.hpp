#pragma once

// Realizations of Markov semigroups: exact CTMC jump paths, Euler-Maruyama
// diffusion paths, and the uniformization oracle for e^{t(L - diag c)}.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "msplice/errors.hpp"
#include "msplice/extended_state.hpp"
#include "msplice/rng.hpp"
#include "msplice/state.hpp"

namespace msplice {

/// Generator of a finite-state CTMC: nonnegative off-diagonal rates, zero row sums.
class RateModel {
 public:
  using point_type = Site;

  RateModel(Matrix rates, StateSpaceTag tag) : rates_(std::move(rates)), tag_(std::move(tag)) {
    const auto n = static_cast<Eigen::Index>(tag_.size());
    if (rates_.rows() != n || rates_.cols() != n)
      throw DimensionMismatch("rate matrix shape does not match state space size");
    exit_rates_.resize(tag_.size());
    jump_weights_.assign(tag_.size(), std::vector<double>(tag_.size(), 0.0));
    for (Eigen::Index i = 0; i < n; ++i) {
      double off = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (!std::isfinite(rates_(i, j))) throw DomainError("non-finite rate");
        if (i == j) continue;
        if (rates_(i, j) < 0.0) throw DomainError("negative off-diagonal rate");
        off += rates_(i, j);
        jump_weights_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = rates_(i, j);
      }
      if (std::abs(rates_(i, i) + off) > kRowTolerance * std::max(1.0, off))
        throw DomainError("rate matrix row " + std::to_string(i) + " does not sum to zero");
      exit_rates_[static_cast<std::size_t>(i)] = off;
    }
  }

  const Matrix& rates() const noexcept { return rates_; }
  const StateSpaceTag& tag() const noexcept { return tag_; }
  std::size_t size() const noexcept { return tag_.size(); }
  Site site(std::size_t index) const {
    if (index >= size()) throw DomainError("state index out of range");
    return Site{tag_.id(), index};
  }
  double exit_rate(std::size_t i) const { return exit_rates_.at(i); }
  std::span<const double> jump_weights(std::size_t i) const { return jump_weights_.at(i); }

 private:
  Matrix rates_;
  StateSpaceTag tag_;
  std::vector<double> exit_rates_;
  std::vector<std::vector<double>> jump_weights_;
};

/// dX = drift(X) dt + diffusion(X) dW, discretized with a fixed Euler step.
class DiffusionModel {
 public:
  using point_type = double;
  using Coefficient = std::function<double(double)>;

  DiffusionModel(Coefficient drift, Coefficient diffusion, double dt)
      : drift_(std::move(drift)), diffusion_(std::move(diffusion)), dt_(dt) {
    if (!(dt_ > 0.0) || !std::isfinite(dt_)) throw DomainError("diffusion step must be positive");
  }

  static DiffusionModel ornstein_uhlenbeck(double theta, double sigma, double dt) {
    return DiffusionModel([theta](double x) { return -theta * x; },
                          [sigma](double) { return sigma; }, dt);
  }

  double drift(double x) const { return drift_(x); }
  double diffusion(double x) const { return diffusion_(x); }
  double dt() const noexcept { return dt_; }

 private:
  Coefficient drift_, diffusion_;
  double dt_;
};

template <class Point>
struct JumpEvent {
  double time;
  Ext<Point> state;

  friend bool operator==(const JumpEvent&, const JumpEvent&) = default;
};

/// Right-continuous piecewise-constant path stored as its jump list. `origin`
/// is the absolute time of local time 0 and moves under shifts.
template <class Point>
class JumpPath {
 public:
  JumpPath(std::vector<JumpEvent<Point>> events, double horizon, double origin = 0.0)
      : events_(std::move(events)), horizon_(horizon), origin_(origin) {
    if (events_.empty() || events_.front().time != 0.0)
      throw DomainError("jump path must start with an event at t=0");
    if (!(horizon_ >= 0.0)) throw DomainError("jump path horizon must be nonnegative");
    for (std::size_t i = 0; i < events_.size(); ++i) {
      if (i > 0 && !(events_[i].time > events_[i - 1].time))
        throw DomainError("jump path event times must be strictly ascending");
      if (events_[i].state.is_dead() && i + 1 != events_.size())
        throw DomainError("jump path leaves the cemetery (trap violated)");
    }
    if (events_.back().time > horizon_) throw DomainError("jump path event beyond horizon");
  }

  const std::vector<JumpEvent<Point>>& events() const noexcept { return events_; }
  double horizon() const noexcept { return horizon_; }
  double origin() const noexcept { return origin_; }

  friend bool operator==(const JumpPath&, const JumpPath&) = default;

 private:
  std::vector<JumpEvent<Point>> events_;
  double horizon_;
  double origin_;
};

/// Values on the grid k*dt, read as a right-continuous step function.
template <class Point>
class GridPath {
 public:
  GridPath(double dt, std::vector<Ext<Point>> values, double origin = 0.0)
      : dt_(dt), values_(std::move(values)), origin_(origin) {
    if (!(dt_ > 0.0)) throw DomainError("grid path step must be positive");
    if (values_.empty()) throw DomainError("grid path needs at least one value");
    bool dead = false;
    for (const auto& v : values_) {
      if (dead && v.alive()) throw DomainError("grid path leaves the cemetery (trap violated)");
      dead = dead || v.is_dead();
    }
  }

  double dt() const noexcept { return dt_; }
  const std::vector<Ext<Point>>& values() const noexcept { return values_; }
  double horizon() const noexcept { return dt_ * static_cast<double>(values_.size() - 1); }
  double origin() const noexcept { return origin_; }

  friend bool operator==(const GridPath&, const GridPath&) = default;

 private:
  double dt_;
  std::vector<Ext<Point>> values_;
  double origin_;
};

template <class Point>
using Path = std::variant<JumpPath<Point>, GridPath<Point>>;

namespace detail {

inline constexpr double kGridSnap = 1e-9;

inline bool on_grid(double t, double dt, std::size_t& k) {
  const double r = t / dt;
  const double nearest = std::round(r);
  if (std::abs(r - nearest) <= kGridSnap) {
    k = static_cast<std::size_t>(nearest);
    return true;
  }
  k = static_cast<std::size_t>(std::floor(r));
  return false;
}

inline void check_time(double t, double horizon) {
  const double slack = 1e-12 * std::max(1.0, horizon);
  if (!(t >= 0.0) || t > horizon + slack)
    throw DomainError("time " + std::to_string(t) + " outside [0, " + std::to_string(horizon) + "]");
}

inline std::size_t steps_for(double horizon, double dt) {
  return static_cast<std::size_t>(std::ceil(horizon / dt - kGridSnap));
}

}  // namespace detail

template <class Point>
double path_horizon(const JumpPath<Point>& p) {
  return p.horizon();
}
template <class Point>
double path_horizon(const GridPath<Point>& p) {
  return p.horizon();
}
template <class Point>
double path_horizon(const Path<Point>& p) {
  return std::visit([](const auto& q) { return q.horizon(); }, p);
}

template <class Point>
Ext<Point> path_eval(const JumpPath<Point>& p, double t) {
  detail::check_time(t, p.horizon());
  const auto& ev = p.events();
  auto it = std::upper_bound(ev.begin(), ev.end(), t,
                             [](double v, const JumpEvent<Point>& e) { return v < e.time; });
  return std::prev(it)->state;
}

template <class Point>
Ext<Point> path_left_limit(const JumpPath<Point>& p, double t) {
  if (!(t > 0.0)) throw DomainError("left limit requires t > 0");
  detail::check_time(t, p.horizon());
  const auto& ev = p.events();
  auto it = std::lower_bound(ev.begin(), ev.end(), t,
                             [](const JumpEvent<Point>& e, double v) { return e.time < v; });
  return std::prev(it)->state;
}

template <class Point>
Ext<Point> path_eval(const GridPath<Point>& p, double t) {
  detail::check_time(t, p.horizon());
  std::size_t k;
  detail::on_grid(t, p.dt(), k);
  return p.values()[std::min(k, p.values().size() - 1)];
}

template <class Point>
Ext<Point> path_left_limit(const GridPath<Point>& p, double t) {
  if (!(t > 0.0)) throw DomainError("left limit requires t > 0");
  detail::check_time(t, p.horizon());
  std::size_t k;
  if (detail::on_grid(t, p.dt(), k)) {
    if (k == 0) throw DomainError("left limit requires t > 0");
    --k;
  }
  return p.values()[std::min(k, p.values().size() - 1)];
}

template <class Point>
Ext<Point> path_eval(const Path<Point>& p, double t) {
  return std::visit([t](const auto& q) { return path_eval(q, t); }, p);
}
template <class Point>
Ext<Point> path_left_limit(const Path<Point>& p, double t) {
  return std::visit([t](const auto& q) { return path_left_limit(q, t); }, p);
}

/// theta_s: the path seen from time s on.
template <class Point>
JumpPath<Point> shift_path(const JumpPath<Point>& p, double s) {
  if (!(s >= 0.0) || s > p.horizon()) throw DomainError("shift outside [0, horizon]");
  if (s == 0.0) return p;
  std::vector<JumpEvent<Point>> out;
  out.push_back({0.0, path_eval(p, s)});
  for (const auto& e : p.events())
    if (e.time > s) out.push_back({e.time - s, e.state});
  return JumpPath<Point>(std::move(out), p.horizon() - s, p.origin() + s);
}

template <class Point>
GridPath<Point> shift_path(const GridPath<Point>& p, double s) {
  if (!(s >= 0.0) || s > p.horizon() * (1.0 + detail::kGridSnap))
    throw DomainError("shift outside [0, horizon]");
  std::size_t k;
  if (!detail::on_grid(s, p.dt(), k)) throw DomainError("grid path shift must be a multiple of dt");
  if (k == 0) return p;
  std::vector<Ext<Point>> values(p.values().begin() + static_cast<std::ptrdiff_t>(k), p.values().end());
  return GridPath<Point>(p.dt(), std::move(values), p.origin() + s);
}

template <class Point>
Path<Point> shift_path(const Path<Point>& p, double s) {
  return std::visit([s](const auto& q) -> Path<Point> { return shift_path(q, s); }, p);
}

/// Same step function in event-list form.
template <class Point>
JumpPath<Point> to_jump_path(const GridPath<Point>& p) {
  std::vector<JumpEvent<Point>> events;
  events.reserve(p.values().size());
  for (std::size_t k = 0; k < p.values().size(); ++k) {
    events.push_back({p.dt() * static_cast<double>(k), p.values()[k]});
    if (p.values()[k].is_dead()) break;
  }
  return JumpPath<Point>(std::move(events), p.horizon(), p.origin());
}

template <class Point>
JumpPath<Point> to_jump_path(const Path<Point>& p) {
  if (const auto* jp = std::get_if<JumpPath<Point>>(&p)) return *jp;
  return to_jump_path(std::get<GridPath<Point>>(p));
}

// --- samplers -------------------------------------------------------------

/// Holding time and jump target out of `from`; nullopt when `from` is absorbing.
inline std::optional<std::pair<double, std::size_t>> ctmc_step(const RateModel& m, std::size_t from,
                                                               RngStream& rng) {
  const double q = m.exit_rate(from);
  if (q <= 0.0) return std::nullopt;
  const double hold = rng.exponential() / q;
  const std::size_t to = rng.categorical(m.jump_weights(from));
  return std::make_pair(hold, to);
}

inline JumpPath<Site> sample_ctmc_path(const RateModel& m, std::size_t x0, double horizon,
                                       RngStream& rng) {
  if (x0 >= m.size()) throw DomainError("initial state out of range");
  if (!(horizon > 0.0)) throw DomainError("horizon must be positive");
  std::vector<JumpEvent<Site>> events{{0.0, m.site(x0)}};
  double t = 0.0;
  std::size_t x = x0;
  while (auto step = ctmc_step(m, x, rng)) {
    t += step->first;
    if (t >= horizon) break;
    x = step->second;
    events.push_back({t, m.site(x)});
  }
  return JumpPath<Site>(std::move(events), horizon);
}

inline double euler_step(const DiffusionModel& m, double x, double sqrt_dt, RngStream& rng) {
  return x + m.drift(x) * m.dt() + m.diffusion(x) * sqrt_dt * rng.normal();
}

inline GridPath<double> sample_sde_path(const DiffusionModel& m, double x0, double horizon,
                                        RngStream& rng) {
  if (!(horizon >= m.dt() * (1.0 - detail::kGridSnap))) throw DomainError("horizon shorter than dt");
  if (!std::isfinite(x0)) throw PathBlowup(0.0);
  const std::size_t steps = detail::steps_for(horizon, m.dt());
  const double sqrt_dt = std::sqrt(m.dt());
  std::vector<Ext<double>> values;
  values.reserve(steps + 1);
  double x = x0;
  values.emplace_back(x);
  for (std::size_t k = 0; k < steps; ++k) {
    x = euler_step(m, x, sqrt_dt, rng);
    if (!std::isfinite(x)) throw PathBlowup(m.dt() * static_cast<double>(k + 1));
    values.emplace_back(x);
  }
  return GridPath<double>(m.dt(), std::move(values));
}

inline Path<Site> sample_path(const RateModel& m, const Site& x0, double horizon, RngStream& rng) {
  if (x0.tag != m.tag().id()) throw TagMismatch("initial state belongs to another state space");
  return sample_ctmc_path(m, x0.index, horizon, rng);
}

inline Path<double> sample_path(const DiffusionModel& m, double x0, double horizon, RngStream& rng) {
  return sample_sde_path(m, x0, horizon, rng);
}

// --- exact semigroup ------------------------------------------------------

/// e^{tM} for a sub-generator M (nonnegative off-diagonal, row sums <= 0) by
/// uniformization. The Poisson series is evaluated on t / 2^k with Lambda t / 2^k <= 8
/// and squared back; the truncated tail is below 1e-17 per piece.
inline Matrix uniformized_exponential(const Matrix& M, double t) {
  if (!(t >= 0.0)) throw DomainError("semigroup time must be nonnegative");
  const Eigen::Index n = M.rows();
  if (M.cols() != n) throw DimensionMismatch("generator must be square");
  const Matrix identity = Matrix::Identity(n, n);
  double lambda = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) lambda = std::max(lambda, -M(i, i));
  if (t == 0.0 || lambda <= 0.0) return identity;

  const Matrix jump = identity + M / lambda;
  int squarings = 0;
  double tau = t;
  while (lambda * tau > 8.0) {
    tau *= 0.5;
    ++squarings;
  }
  const double a = lambda * tau;
  double weight = std::exp(-a);
  Matrix power = identity;
  Matrix result = weight * identity;
  for (int k = 1;; ++k) {
    power = power * jump;
    weight *= a / k;
    result += weight * power;
    if (k > 2.0 * a + 4.0 && weight < 1e-18) break;
  }
  for (int i = 0; i < squarings; ++i) result = result * result;
  return result;
}

/// K_t = e^{tL}, or Q_t = e^{t(L - diag c)} when kill rates are supplied.
inline SubKernel ctmc_semigroup_exact(const RateModel& m, std::optional<std::span<const double>> c,
                                      double t) {
  Matrix M = m.rates();
  if (c) {
    if (c->size() != m.size()) throw DimensionMismatch("kill-rate vector length mismatch");
    for (std::size_t i = 0; i < c->size(); ++i) {
      if (!((*c)[i] >= 0.0)) throw DomainError("kill rates must be nonnegative");
      M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) -= (*c)[i];
    }
  }
  return SubKernel(uniformized_exponential(M, t), m.tag());
}

inline Matrix killed_generator(const RateModel& m, std::span<const double> c) {
  if (c.size() != m.size()) throw DimensionMismatch("kill-rate vector length mismatch");
  Matrix M = m.rates();
  for (std::size_t i = 0; i < c.size(); ++i)
    M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) -= c[i];
  return M;
}

}  // namespace msplice
