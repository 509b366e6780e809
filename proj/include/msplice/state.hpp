#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "msplice/errors.hpp"

namespace msplice {

/// Finite state space E_i. Distinct blocks of a concatenation carry distinct
/// ids, which is how their state spaces are kept disjoint.
class StateSpaceTag {
 public:
  StateSpaceTag(int id, std::size_t size, std::vector<std::string> labels = {})
      : id_(id), size_(size), labels_(std::move(labels)) {
    if (size_ == 0) throw DomainError("state space must have at least one state");
    if (!labels_.empty() && labels_.size() != size_)
      throw DimensionMismatch("label count does not match state space size");
  }

  int id() const noexcept { return id_; }
  std::size_t size() const noexcept { return size_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  friend bool operator==(const StateSpaceTag& a, const StateSpaceTag& b) {
    return a.id_ == b.id_ && a.size_ == b.size_;
  }

 private:
  int id_;
  std::size_t size_;
  std::vector<std::string> labels_;
};

/// Alive point of a tagged finite state space.
struct Site {
  int tag = 0;
  std::size_t index = 0;

  auto operator<=>(const Site&) const = default;
};

inline std::ostream& operator<<(std::ostream& os, const Site& s) {
  return os << s.tag << ':' << s.index;
}

/// A point of E* = E + {Dead}. Dead carries no tag.
template <class Point>
class Ext {
 public:
  Ext(Point p) : point_(std::move(p)) {}  // NOLINT(google-explicit-constructor)
  static Ext dead() { return Ext(); }

  bool alive() const noexcept { return point_.has_value(); }
  bool is_dead() const noexcept { return !point_.has_value(); }

  const Point& point() const {
    if (!point_) throw DomainError("dead state has no alive point");
    return *point_;
  }

  friend bool operator==(const Ext& a, const Ext& b) { return a.point_ == b.point_; }

 private:
  Ext() = default;
  std::optional<Point> point_;
};

using ExtState = Ext<Site>;

template <class Point>
std::ostream& operator<<(std::ostream& os, const Ext<Point>& x) {
  if (x.is_dead()) return os << "Dead";
  return os << x.point();
}

/// A time that may lie beyond the simulated window; replaces the value +inf.
struct StoppingTime {
  std::optional<double> value;
  double horizon = 0.0;

  static StoppingTime at(double t, double horizon) { return {t, horizon}; }
  static StoppingTime censored_at(double horizon) { return {std::nullopt, horizon}; }

  bool censored() const noexcept { return !value.has_value(); }
  double time() const {
    if (!value) throw DomainError("stopping time is censored at horizon " + std::to_string(horizon));
    return *value;
  }
  /// Strictly after t (censored counts as after every t within the horizon).
  bool after(double t) const noexcept { return !value || *value > t; }

  friend bool operator==(const StoppingTime&, const StoppingTime&) = default;
};

}  // namespace msplice
