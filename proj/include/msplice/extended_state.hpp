#pragma once

// Sub-Markov kernels on finite spaces and their one-point (cemetery)
// extensions. The cemetery Dead is the last matrix index of an extended
// kernel.

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "msplice/errors.hpp"
#include "msplice/state.hpp"

namespace msplice {

inline constexpr double kRowTolerance = 1e-12;
inline constexpr double kSemigroupTolerance = 1e-10;

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Row-substochastic matrix on a tagged finite space.
class SubKernel {
 public:
  SubKernel(Matrix matrix, StateSpaceTag tag) : matrix_(std::move(matrix)), tag_(std::move(tag)) {
    const auto n = static_cast<Eigen::Index>(tag_.size());
    if (matrix_.rows() != n || matrix_.cols() != n)
      throw DimensionMismatch("sub-kernel shape does not match state space size");
    for (Eigen::Index i = 0; i < n; ++i) {
      double sum = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        const double v = matrix_(i, j);
        if (!std::isfinite(v) || v < 0.0 || v > 1.0 + kRowTolerance)
          throw InvalidKernel("sub-kernel entry (" + std::to_string(i) + "," + std::to_string(j) +
                              ") = " + std::to_string(v) + " outside [0,1]");
        sum += v;
      }
      if (sum > 1.0 + kRowTolerance)
        throw InvalidKernel("sub-kernel row " + std::to_string(i) + " sums to " + std::to_string(sum));
    }
  }

  const Matrix& matrix() const noexcept { return matrix_; }
  const StateSpaceTag& tag() const noexcept { return tag_; }
  std::size_t size() const noexcept { return tag_.size(); }
  double operator()(std::size_t i, std::size_t j) const {
    return matrix_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

 private:
  Matrix matrix_;
  StateSpaceTag tag_;
};

/// Markov kernel on E + {Dead} with Dead absorbing.
class ExtKernel {
 public:
  ExtKernel(Matrix matrix, StateSpaceTag tag) : matrix_(std::move(matrix)), tag_(std::move(tag)) {
    const auto n = static_cast<Eigen::Index>(tag_.size()) + 1;
    if (matrix_.rows() != n || matrix_.cols() != n)
      throw DimensionMismatch("extended kernel must be (size+1)x(size+1)");
    for (Eigen::Index i = 0; i < n; ++i) {
      double sum = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        const double v = matrix_(i, j);
        if (!std::isfinite(v) || v < 0.0)
          throw InvalidKernel("extended kernel has a negative or non-finite entry");
        sum += v;
      }
      if (std::abs(sum - 1.0) > kRowTolerance)
        throw InvalidKernel("extended kernel row " + std::to_string(i) + " sums to " +
                            std::to_string(sum));
    }
    const Eigen::Index dead = n - 1;
    for (Eigen::Index j = 0; j < n; ++j)
      if (matrix_(dead, j) != (j == dead ? 1.0 : 0.0))
        throw InvalidKernel("cemetery row of an extended kernel must be the unit vector on Dead");
  }

  const Matrix& matrix() const noexcept { return matrix_; }
  const StateSpaceTag& tag() const noexcept { return tag_; }
  std::size_t alive_size() const noexcept { return tag_.size(); }
  std::size_t dead_index() const noexcept { return tag_.size(); }

 private:
  Matrix matrix_;
  StateSpaceTag tag_;
};

/// kappa*(x, .) = [kappa(x, .), 1 - kappa(x, E)] on alive rows; Dead row is delta_Dead.
inline ExtKernel extend_kernel(const SubKernel& k) {
  const auto n = static_cast<Eigen::Index>(k.size());
  Matrix ext = Matrix::Zero(n + 1, n + 1);
  ext.topLeftCorner(n, n) = k.matrix();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mass = k.matrix().row(i).sum();
    if (mass > 1.0 + kRowTolerance)
      throw InvalidKernel("row " + std::to_string(i) + " mass exceeds one");
    ext(i, n) = std::max(0.0, 1.0 - mass);
  }
  ext(n, n) = 1.0;
  return ExtKernel(std::move(ext), k.tag());
}

inline SubKernel restrict_kernel(const ExtKernel& k) {
  const auto n = static_cast<Eigen::Index>(k.alive_size());
  return SubKernel(k.matrix().topLeftCorner(n, n), k.tag());
}

/// f*(Dead) := 0.
inline Vector extend_function(std::span<const double> f, const StateSpaceTag& tag) {
  if (f.size() != tag.size()) throw DimensionMismatch("function length does not match state space");
  Vector out(static_cast<Eigen::Index>(f.size()) + 1);
  for (std::size_t i = 0; i < f.size(); ++i) out(static_cast<Eigen::Index>(i)) = f[i];
  out(out.size() - 1) = 0.0;
  return out;
}

inline Vector apply_extended(const ExtKernel& k, const Vector& fstar) {
  if (fstar.size() != k.matrix().cols()) throw DimensionMismatch("extended vector has wrong length");
  return k.matrix() * fstar;
}

/// Right-hand side of kappa* f* = kappa(f*|_E - f*(Dead)) + f*(Dead), computed
/// from the sub-kernel alone.
inline Vector extension_identity(const SubKernel& k, const Vector& fstar) {
  const auto n = static_cast<Eigen::Index>(k.size());
  if (fstar.size() != n + 1) throw DimensionMismatch("extended vector has wrong length");
  const double at_dead = fstar(n);
  Vector out(n + 1);
  out.head(n) = k.matrix() * (fstar.head(n).array() - at_dead).matrix();
  out.head(n).array() += at_dead;
  out(n) = at_dead;
  return out;
}

struct TimedKernel {
  double time;
  SubKernel kernel;
};

namespace detail {

template <class Get>
void check_chapman_kolmogorov(std::size_t count, const std::vector<double>& times, Get&& get,
                              double tol) {
  constexpr double kTimeMatch = 1e-9;
  for (std::size_t a = 0; a < count; ++a) {
    for (std::size_t b = 0; b < count; ++b) {
      const double sum = times[a] + times[b];
      for (std::size_t c = 0; c < count; ++c) {
        if (std::abs(times[c] - sum) > kTimeMatch) continue;
        const Matrix product = get(a) * get(b);
        const double dev = (get(c) - product).cwiseAbs().maxCoeff();
        if (dev > tol) throw SemigroupViolation(times[a], times[b], dev);
      }
    }
  }
}

}  // namespace detail

/// Extends a sub-Markov family kappa_t after checking kappa_{s+t} = kappa_s kappa_t on
/// every (s, t) whose sum also appears in the grid; re-checks the extended family.
inline std::vector<ExtKernel> extend_semigroup_step(const std::vector<TimedKernel>& family,
                                                    double tol = kSemigroupTolerance) {
  if (family.empty()) return {};
  std::vector<double> times;
  for (const auto& tk : family) {
    if (!(tk.kernel.tag() == family.front().kernel.tag()))
      throw TagMismatch("semigroup family mixes state spaces");
    times.push_back(tk.time);
  }
  detail::check_chapman_kolmogorov(
      family.size(), times, [&](std::size_t i) -> const Matrix& { return family[i].kernel.matrix(); },
      tol);

  std::vector<ExtKernel> out;
  out.reserve(family.size());
  for (const auto& tk : family) out.push_back(extend_kernel(tk.kernel));
  detail::check_chapman_kolmogorov(
      out.size(), times, [&](std::size_t i) -> const Matrix& { return out[i].matrix(); }, tol);
  return out;
}

}  // namespace msplice
