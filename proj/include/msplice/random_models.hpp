#pragma once

// Seeded generators for random kernels, rate models, distributions and test
// functions used by the experiment families.

#include <cstddef>
#include <vector>

#include "msplice/extended_state.hpp"
#include "msplice/process_models.hpp"
#include "msplice/rng.hpp"

namespace msplice {

inline double uniform_in(RngStream& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

/// Random probability vector (normalized uniforms).
inline std::vector<double> random_distribution(std::size_t n, RngStream& rng) {
  std::vector<double> p(n);
  double total = 0.0;
  for (double& v : p) total += (v = rng.uniform());
  for (double& v : p) v /= total;
  return p;
}

inline std::vector<std::vector<double>> random_stochastic_rows(std::size_t rows, std::size_t cols, RngStream& rng) {
  std::vector<std::vector<double>> out;
  out.reserve(rows);
  for (std::size_t i = 0; i < rows; ++i) out.push_back(random_distribution(cols, rng));
  return out;
}

/// Sub-stochastic kernel; about one row in five is exactly stochastic, and
/// one in ten is identically zero, so both boundary cases occur.
inline SubKernel random_sub_kernel(std::size_t n, int tag, RngStream& rng) {
  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double u = rng.uniform();
    const double mass = u < 0.1 ? 0.0 : (u < 0.3 ? 1.0 : rng.uniform());
    const auto p = random_distribution(n, rng);
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = mass * p[static_cast<std::size_t>(j)];
  }
  return SubKernel(std::move(m), StateSpaceTag(tag, n));
}

/// Dense rate matrix with off-diagonal rates uniform in [lo, hi].
inline RateModel random_rate_model(std::size_t n, double lo, double hi, int tag, RngStream& rng) {
  Matrix q = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    double off = 0.0;
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
      if (i == j) continue;
      q(i, j) = uniform_in(rng, lo, hi);
      off += q(i, j);
    }
    q(i, i) = -off;
  }
  return RateModel(std::move(q), StateSpaceTag(tag, n));
}

inline std::vector<double> random_values(std::size_t n, double lo, double hi, RngStream& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = uniform_in(rng, lo, hi);
  return v;
}

inline Vector to_vector(const std::vector<double>& v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

}  // namespace msplice
