#pragma once

// Additive and multiplicative functionals along paths, terminal times and
// hitting times, path lifetimes.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "msplice/errors.hpp"
#include "msplice/process_models.hpp"
#include "msplice/state.hpp"

namespace msplice {

/// Nonnegative killing rate with a declared upper bound, checked at every evaluation.
template <class Point>
class RateFunction {
 public:
  RateFunction(std::function<double(const Point&)> fn, double c_max) : fn_(std::move(fn)), c_max_(c_max) {
    if (!(c_max_ >= 0.0) || !std::isfinite(c_max_)) throw DomainError("rate bound must be finite");
  }

  static RateFunction constant(double lambda) {
    if (!(lambda >= 0.0)) throw DomainError("rate must be nonnegative");
    RateFunction r([lambda](const Point&) { return lambda; }, lambda);
    r.constant_ = lambda;
    return r;
  }

  double operator()(const Point& x) const {
    const double v = fn_(x);
    if (!(v >= 0.0) || v > c_max_) throw RateBoundError(v, c_max_);
    return v;
  }
  /// c extended by c(Dead) = 0.
  double operator()(const Ext<Point>& x) const { return x.alive() ? (*this)(x.point()) : 0.0; }

  double bound() const noexcept { return c_max_; }
  std::optional<double> constant_value() const noexcept { return constant_; }
  /// Per-state values when built from a vector on a finite space.
  const std::optional<std::vector<double>>& values() const noexcept { return values_; }

  template <class P = Point, class = std::enable_if_t<std::is_same_v<P, Site>>>
  static RateFunction on_sites(std::vector<double> c, int tag, std::optional<double> c_max = {}) {
    double top = 0.0;
    for (double v : c) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("kill rates must be finite and nonnegative");
      top = std::max(top, v);
    }
    const double bound = c_max.value_or(top);
    auto shared = c;
    RateFunction r(
        [shared = std::move(shared), tag](const Site& s) {
          if (s.tag != tag) throw TagMismatch("rate function evaluated on another state space");
          if (s.index >= shared.size()) throw DomainError("state index out of range for rate vector");
          return shared[s.index];
        },
        bound);
    if (!c.empty() && std::all_of(c.begin(), c.end(), [&](double v) { return v == c.front(); }))
      r.constant_ = c.front();
    r.values_ = std::move(c);
    return r;
  }

 private:
  std::function<double(const Point&)> fn_;
  double c_max_;
  std::optional<double> constant_;
  std::optional<std::vector<double>> values_;
};

/// A_t as a nondecreasing piecewise-linear function. `slope` of breakpoint k
/// applies on [t_k, t_{k+1}); the last breakpoint sits at the horizon.
class AfTrace {
 public:
  struct Breakpoint {
    double time;
    double value;
    double slope;
  };

  explicit AfTrace(std::vector<Breakpoint> points) : points_(std::move(points)) {
    if (points_.empty() || points_.front().time != 0.0 || points_.front().value != 0.0)
      throw DomainError("additive functional must start at A_0 = 0");
    for (std::size_t k = 1; k < points_.size(); ++k) {
      if (!(points_[k].time >= points_[k - 1].time)) throw DomainError("breakpoints must ascend");
      if (points_[k].value < points_[k - 1].value) throw DomainError("additive functional decreased");
    }
  }

  const std::vector<Breakpoint>& breakpoints() const noexcept { return points_; }
  double horizon() const noexcept { return points_.back().time; }

  double value(double t) const {
    detail::check_time(t, horizon());
    auto it = std::upper_bound(points_.begin(), points_.end(), t,
                               [](double v, const Breakpoint& b) { return v < b.time; });
    const Breakpoint& b = *std::prev(it);
    if (it == points_.end()) return b.value;
    return b.value + b.slope * (t - b.time);
  }

  /// First t with A_t >= level, exact on the linear pieces; censored if never.
  StoppingTime first_passage(double level) const {
    if (level <= 0.0) return StoppingTime::at(0.0, horizon());
    for (std::size_t k = 0; k + 1 < points_.size(); ++k) {
      const Breakpoint& b = points_[k];
      if (points_[k + 1].value >= level && b.slope > 0.0) {
        const double t = b.time + (level - b.value) / b.slope;
        return StoppingTime::at(std::min(t, points_[k + 1].time), horizon());
      }
    }
    return StoppingTime::censored_at(horizon());
  }

 private:
  std::vector<Breakpoint> points_;
};

namespace detail {

template <class Point, class Rate>
AfTrace af_from_segments(const std::vector<JumpEvent<Point>>& ev, double horizon, const Rate& c) {
  std::vector<AfTrace::Breakpoint> pts;
  pts.reserve(ev.size() + 1);
  double a = 0.0;
  for (std::size_t i = 0; i < ev.size(); ++i) {
    const double slope = c(ev[i].state);
    pts.push_back({ev[i].time, a, slope});
    const double end = i + 1 < ev.size() ? ev[i + 1].time : horizon;
    a += slope * (end - ev[i].time);
  }
  if (pts.back().time < horizon) pts.push_back({horizon, a, 0.0});
  return AfTrace(std::move(pts));
}

}  // namespace detail

/// Full trace of A_t = int_0^t c(X_u) du: exact on jump paths, left-endpoint sums on grids.
template <class Point>
AfTrace additive_trace(const JumpPath<Point>& p, const RateFunction<Point>& c) {
  return detail::af_from_segments(p.events(), p.horizon(), c);
}

template <class Point>
AfTrace additive_trace(const GridPath<Point>& p, const RateFunction<Point>& c) {
  std::vector<AfTrace::Breakpoint> pts;
  pts.reserve(p.values().size());
  double a = 0.0;
  for (std::size_t k = 0; k < p.values().size(); ++k) {
    const double slope = c(p.values()[k]);
    pts.push_back({p.dt() * static_cast<double>(k), a, slope});
    a += slope * p.dt();
  }
  return AfTrace(std::move(pts));
}

template <class Point>
AfTrace additive_trace(const Path<Point>& p, const RateFunction<Point>& c) {
  return std::visit([&](const auto& q) { return additive_trace(q, c); }, p);
}

template <class PathT, class Point>
double additive_integral(const PathT& p, const RateFunction<Point>& c, double t) {
  return additive_trace(p, c).value(t);
}

/// M_t = e^{-A_t} or 1_{[0, tau)}(t).
class MfTrace {
 public:
  static MfTrace exponential(AfTrace a) { return MfTrace(std::move(a)); }
  static MfTrace indicator(StoppingTime tau) { return MfTrace(tau); }

  double value(double t) const {
    if (const auto* a = std::get_if<AfTrace>(&rep_)) return std::exp(-a->value(t));
    const auto& tau = std::get<StoppingTime>(rep_);
    detail::check_time(t, tau.horizon);
    return tau.after(t) ? 1.0 : 0.0;
  }

  double horizon() const {
    if (const auto* a = std::get_if<AfTrace>(&rep_)) return a->horizon();
    return std::get<StoppingTime>(rep_).horizon;
  }

  bool is_indicator() const noexcept { return std::holds_alternative<StoppingTime>(rep_); }
  const AfTrace* additive() const noexcept { return std::get_if<AfTrace>(&rep_); }

  /// Times at which the trace changes slope or jumps.
  std::vector<double> breakpoints() const {
    std::vector<double> out;
    if (const auto* a = std::get_if<AfTrace>(&rep_)) {
      for (const auto& b : a->breakpoints()) out.push_back(b.time);
    } else {
      const auto& tau = std::get<StoppingTime>(rep_);
      out.push_back(0.0);
      if (!tau.censored() && tau.time() > 0.0) out.push_back(tau.time());
      if (out.back() < tau.horizon) out.push_back(tau.horizon);
    }
    return out;
  }

 private:
  explicit MfTrace(AfTrace a) : rep_(std::move(a)) {}
  explicit MfTrace(StoppingTime t) : rep_(t) {}
  std::variant<AfTrace, StoppingTime> rep_;
};

inline MfTrace mf_from_af(const AfTrace& a) { return MfTrace::exponential(a); }

// --- terminal rules -------------------------------------------------------

/// Subset of a finite space; every subset is closed.
struct SiteSet {
  int tag = 0;
  std::vector<std::size_t> members;

  bool contains(const Site& s) const {
    return s.tag == tag && std::find(members.begin(), members.end(), s.index) != members.end();
  }
};

/// Finite union of closed intervals [lo, hi]; infinite endpoints allowed.
struct IntervalSet {
  std::vector<std::pair<double, double>> intervals;

  bool contains(double x) const {
    for (const auto& [lo, hi] : intervals)
      if (x >= lo && x <= hi) return true;
    return false;
  }
};

template <class Point>
using ClosedSet = std::conditional_t<std::is_same_v<Point, Site>, SiteSet, IntervalSet>;

template <class Point>
struct HitClosedSet {
  ClosedSet<Point> target;
};

/// Fixed absolute time; read against the path's origin so that shifts reduce it.
struct DeterministicTime {
  double time;
};

template <class Point>
using TerminalRule = std::variant<HitClosedSet<Point>, DeterministicTime>;

/// inf{t : X_t in B}; X_tau lies in B whenever tau is not censored.
template <class Point>
StoppingTime hitting_time(const JumpPath<Point>& p, const ClosedSet<Point>& target) {
  for (const auto& e : p.events())
    if (e.state.alive() && target.contains(e.state.point())) return StoppingTime::at(e.time, p.horizon());
  return StoppingTime::censored_at(p.horizon());
}

template <class Point>
StoppingTime hitting_time(const GridPath<Point>& p, const ClosedSet<Point>& target) {
  for (std::size_t k = 0; k < p.values().size(); ++k) {
    const auto& v = p.values()[k];
    if (v.alive() && target.contains(v.point()))
      return StoppingTime::at(p.dt() * static_cast<double>(k), p.horizon());
  }
  return StoppingTime::censored_at(p.horizon());
}

template <class Point>
StoppingTime hitting_time(const Path<Point>& p, const ClosedSet<Point>& target) {
  return std::visit([&](const auto& q) { return hitting_time(q, target); }, p);
}

namespace detail {

template <class PathT, class Point>
StoppingTime terminal_time_impl(const PathT& p, double origin, const TerminalRule<Point>& rule) {
  const double horizon = path_horizon(p);
  if (const auto* hit = std::get_if<HitClosedSet<Point>>(&rule)) return hitting_time(p, hit->target);
  const double local = std::max(0.0, std::get<DeterministicTime>(rule).time - origin);
  if (local > horizon) return StoppingTime::censored_at(horizon);
  return StoppingTime::at(local, horizon);
}

}  // namespace detail

template <class Point>
StoppingTime terminal_time(const JumpPath<Point>& p, const TerminalRule<Point>& rule) {
  return detail::terminal_time_impl(p, p.origin(), rule);
}
template <class Point>
StoppingTime terminal_time(const GridPath<Point>& p, const TerminalRule<Point>& rule) {
  return detail::terminal_time_impl(p, p.origin(), rule);
}
template <class Point>
StoppingTime terminal_time(const Path<Point>& p, const TerminalRule<Point>& rule) {
  return std::visit([&](const auto& q) { return terminal_time(q, rule); }, p);
}

/// 1_{[0, tau)} for the terminal time tau of `rule`.
template <class PathT, class Point>
MfTrace mf_terminal(const PathT& p, const TerminalRule<Point>& rule) {
  return MfTrace::indicator(terminal_time(p, rule));
}

/// zeta = inf{t : X_t = Dead}.
template <class Point>
StoppingTime path_lifetime(const JumpPath<Point>& p) {
  const auto& last = p.events().back();
  if (last.state.is_dead()) return StoppingTime::at(last.time, p.horizon());
  return StoppingTime::censored_at(p.horizon());
}

template <class Point>
StoppingTime path_lifetime(const GridPath<Point>& p) {
  for (std::size_t k = 0; k < p.values().size(); ++k)
    if (p.values()[k].is_dead()) return StoppingTime::at(p.dt() * static_cast<double>(k), p.horizon());
  return StoppingTime::censored_at(p.horizon());
}

template <class Point>
StoppingTime path_lifetime(const Path<Point>& p) {
  return std::visit([](const auto& q) { return path_lifetime(q); }, p);
}

/// Mass alpha((s, t]) = M_s - M_t of the Lebesgue-Stieltjes measure of M_0 - M.
inline double ls_increment(const MfTrace& m, double s, double t) {
  if (!(s < t)) throw DomainError("increment needs s < t");
  return m.value(s) - m.value(t);
}

}  // namespace msplice
