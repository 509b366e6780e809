#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>
#include <vector>

#include "msplice/msplice.hpp"

namespace msplice::testing {

/// Pade-based matrix exponential, independent of the uniformization code.
inline Matrix expm(const Matrix& m, double t) { return Matrix(m * t).exp(); }

inline Matrix rows3(std::initializer_list<std::initializer_list<double>> r) {
  Matrix m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

inline RateModel three_state(int tag = 1) {
  return RateModel(rows3({{-1.0, 0.6, 0.4}, {0.5, -1.2, 0.7}, {0.3, 0.9, -1.2}}), StateSpaceTag(tag, 3));
}

inline RateModel two_state(double rate, int tag = 1) {
  return RateModel(rows3({{-rate, rate}, {rate, -rate}}), StateSpaceTag(tag, 2));
}

inline KilledProcess<RateModel> exp_kill(const RateModel& m, std::vector<double> c) {
  return {m, ExpRate<Site>{RateFunction<Site>::on_sites(std::move(c), m.tag().id())}};
}

inline double exp_cdf(double rate, double x) { return x <= 0.0 ? 0.0 : 1.0 - std::exp(-rate * x); }

}  // namespace msplice::testing
