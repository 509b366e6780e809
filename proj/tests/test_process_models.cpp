#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

using namespace msplice;
using msplice::testing::expm;
using msplice::testing::rows3;
using msplice::testing::three_state;
using msplice::testing::two_state;

namespace {

Ext<Site> site(std::size_t i) { return Ext<Site>(Site{1, i}); }

JumpPath<Site> ab_path() { return JumpPath<Site>({{0.0, site(0)}, {1.0, site(1)}}, 2.0); }

}  // namespace

TEST(RateModel, ValidatesRows) {
  EXPECT_THROW(RateModel(rows3({{-1.0, 1.0}, {-0.5, 0.5}}), StateSpaceTag(1, 2)), DomainError);
  EXPECT_THROW(RateModel(rows3({{-1.0, 0.9}, {0.5, -0.5}}), StateSpaceTag(1, 2)), DomainError);
  EXPECT_THROW(RateModel(rows3({{0.0}}), StateSpaceTag(1, 2)), DimensionMismatch);
  const RateModel m = three_state();
  EXPECT_DOUBLE_EQ(m.exit_rate(1), 1.2);
  EXPECT_THROW(m.site(3), DomainError);
}

TEST(RngStream, KeyedStreamsAreReproducibleAndDistinct) {
  RngStream a(1, 2, 3), b(1, 2, 3), c(1, 2, 4), d(1, 3, 3);
  const auto x = a.next_u64();
  EXPECT_EQ(x, b.next_u64());
  EXPECT_NE(x, c.next_u64());
  EXPECT_NE(x, d.next_u64());
  RngStream u(5, 0);
  for (int i = 0; i < 10000; ++i) {
    const double v = u.uniform();
    ASSERT_GT(v, 0.0);
    ASSERT_LT(v, 1.0);
  }
  EXPECT_EQ(RngStream(7, 8).lane(2).next_u64(), RngStream(7, 8, 2).next_u64());
}

TEST(SampleCtmc, ZeroGeneratorGivesConstantPath) {
  const RateModel m(Matrix::Zero(3, 3), StateSpaceTag(1, 3));
  RngStream rng(1, 0);
  const auto p = sample_ctmc_path(m, 2, 5.0, rng);
  ASSERT_EQ(p.events().size(), 1u);
  EXPECT_EQ(path_eval(p, 5.0), site(2));
}

TEST(SampleCtmc, HoldingTimeMeanMatchesRate) {
  const RateModel m = two_state(1.0);
  RngStream rng(2, 0);
  std::vector<double> holds;
  for (int i = 0; i < 100000; ++i) holds.push_back(ctmc_step(m, 0, rng)->first);
  const auto r = make_report("hold", holds);
  EXPECT_LT(std::abs(r.mean - 1.0), 3.0 * r.standard_error());
  EXPECT_GT(ks_statistic(holds, [](double x) { return msplice::testing::exp_cdf(1.0, x); }).p_value, 1e-3);
}

TEST(SampleCtmc, TransitionFrequenciesMatchMatrixExponential) {
  const RateModel m = three_state();
  const double t = 0.8;
  const Matrix p = expm(m.rates(), t);
  const std::size_t n = 60000;
  std::vector<double> counts(3, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    RngStream rng(3, i);
    counts[path_eval(sample_ctmc_path(m, 0, t, rng), t).point().index] += 1.0;
  }
  for (Eigen::Index y = 0; y < 3; ++y) {
    const double q = p(0, y);
    const double se = std::sqrt(q * (1 - q) / static_cast<double>(n));
    EXPECT_LT(std::abs(counts[static_cast<std::size_t>(y)] / n - q), 4.0 * se) << "state " << y;
  }
}

TEST(SampleCtmc, SameStreamSamePath) {
  const RateModel m = three_state();
  RngStream a(9, 1), b(9, 1);
  EXPECT_EQ(sample_ctmc_path(m, 1, 10.0, a), sample_ctmc_path(m, 1, 10.0, b));
}

TEST(SampleSde, OuMeanDecays) {
  const auto ou = DiffusionModel::ornstein_uhlenbeck(1.0, 1.0, 1e-2);
  std::vector<double> end;
  for (std::size_t i = 0; i < 20000; ++i) {
    RngStream rng(4, i);
    end.push_back(path_eval(sample_sde_path(ou, 2.0, 1.0, rng), 1.0).point());
  }
  const auto r = make_report("ou", end);
  EXPECT_LT(std::abs(r.mean - 2.0 * std::exp(-1.0)), 3.0 * r.standard_error() + 0.01);
}

TEST(SampleSde, ZeroNoiseFollowsOde) {
  const double dt = 1e-3;
  const DiffusionModel ode([](double x) { return -x; }, [](double) { return 0.0; }, dt);
  RngStream rng(5, 0);
  const auto p = sample_sde_path(ode, 1.0, 1.0, rng);
  EXPECT_NEAR(path_eval(p, 1.0).point(), std::exp(-1.0), dt);
  EXPECT_EQ(p.values().size(), 1001u);
}

TEST(SampleSde, BlowupIsReported) {
  const DiffusionModel bad([](double x) { return 1e200 * x * x; }, [](double) { return 0.0; }, 0.1);
  RngStream rng(6, 0);
  try {
    sample_sde_path(bad, 1.0, 10.0, rng);
    FAIL() << "expected PathBlowup";
  } catch (const PathBlowup& e) {
    EXPECT_GT(e.time(), 0.0);
  }
}

TEST(PathEval, RightContinuityAndLeftLimits) {
  const auto p = ab_path();
  EXPECT_EQ(path_eval(p, 0.0), site(0));
  EXPECT_EQ(path_eval(p, 1.0), site(1));
  EXPECT_EQ(path_left_limit(p, 1.0), site(0));
  EXPECT_EQ(path_left_limit(p, 1.5), site(1));
  EXPECT_THROW(path_left_limit(p, 0.0), DomainError);
  EXPECT_THROW(path_eval(p, 2.5), DomainError);
  EXPECT_THROW(path_eval(p, -0.1), DomainError);
}

TEST(PathEval, GridConventions) {
  const GridPath<double> g(0.5, {1.0, 2.0, 3.0});
  EXPECT_EQ(path_eval(g, 0.5).point(), 2.0);
  EXPECT_EQ(path_eval(g, 0.7).point(), 2.0);
  EXPECT_EQ(path_left_limit(g, 0.5).point(), 1.0);
  EXPECT_EQ(path_left_limit(g, 0.7).point(), 2.0);
  EXPECT_DOUBLE_EQ(g.horizon(), 1.0);
}

TEST(PathInvariants, TrapAndOrderingEnforced) {
  using E = JumpEvent<Site>;
  EXPECT_THROW(JumpPath<Site>({E{0.0, Ext<Site>::dead()}, E{1.0, site(0)}}, 2.0), DomainError);
  EXPECT_THROW(JumpPath<Site>({E{0.0, site(0)}, E{0.0, site(1)}}, 2.0), DomainError);
  EXPECT_THROW(JumpPath<Site>({E{0.5, site(0)}}, 2.0), DomainError);
  EXPECT_THROW(GridPath<double>(0.1, {1.0, Ext<double>::dead(), 2.0}), DomainError);
}

TEST(ShiftPath, HandExamples) {
  const auto p = ab_path();
  const auto q = shift_path(p, 0.5);
  const std::vector<JumpEvent<Site>> want{{0.0, site(0)}, {0.5, site(1)}};
  EXPECT_EQ(q.events(), want);
  EXPECT_DOUBLE_EQ(q.horizon(), 1.5);
  EXPECT_DOUBLE_EQ(q.origin(), 0.5);
  EXPECT_EQ(shift_path(p, 0.0), p);
  EXPECT_EQ(shift_path(shift_path(p, 0.25), 0.5).events(), shift_path(p, 0.75).events());
  EXPECT_THROW(shift_path(p, 3.0), DomainError);
}

TEST(ShiftPath, EvaluationCommutesWithShift) {
  const RateModel m = three_state();
  for (std::uint64_t k = 0; k < 30; ++k) {
    RngStream rng(7, k);
    const auto p = sample_ctmc_path(m, 0, 10.0, rng);
    for (double s : {0.3, 2.0, 7.5}) {
      const auto q = shift_path(p, s);
      for (double t : {0.0, 0.4, 1.7, 2.5}) EXPECT_EQ(path_eval(q, t), path_eval(p, s + t));
    }
  }
}

TEST(ShiftPath, GridShiftNeedsGridMultiple) {
  const GridPath<double> g(0.5, {1.0, 2.0, 3.0, 4.0});
  const auto q = shift_path(g, 1.0);
  EXPECT_EQ(q.values().size(), 2u);
  EXPECT_EQ(path_eval(q, 0.0).point(), 3.0);
  EXPECT_DOUBLE_EQ(q.origin(), 1.0);
  EXPECT_THROW(shift_path(g, 0.3), DomainError);
}

TEST(SemigroupExact, IdentityAtZero) {
  const auto k = ctmc_semigroup_exact(three_state(), std::nullopt, 0.0);
  EXPECT_TRUE(k.matrix() == Matrix::Identity(3, 3));
}

TEST(SemigroupExact, TwoStateClosedForm) {
  const RateModel m = two_state(1.0);
  for (double t : {0.1, 1.0, 5.0, 50.0}) {
    const auto k = ctmc_semigroup_exact(m, std::nullopt, t);
    const double stay = 0.5 + 0.5 * std::exp(-2.0 * t);
    EXPECT_NEAR(k(0, 0), stay, 1e-13);
    EXPECT_NEAR(k(0, 1), 1.0 - stay, 1e-13);
  }
}

TEST(SemigroupExact, ConstantKillScalesRows) {
  const RateModel m = three_state();
  const std::vector<double> c(3, 0.7);
  for (double t : {0.5, 2.0, 9.0}) {
    const auto q = ctmc_semigroup_exact(m, std::span<const double>(c), t);
    for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(q.matrix().row(i).sum(), std::exp(-0.7 * t), 1e-13);
  }
}

TEST(SemigroupExact, AgreesWithPadeAndChapmanKolmogorov) {
  const RateModel m = three_state();
  const std::vector<double> c{0.2, 1.5, 0.0};
  const Matrix gen = killed_generator(m, c);
  for (double t : {0.01, 0.3, 1.0, 7.0, 40.0})
    EXPECT_LT((uniformized_exponential(gen, t) - expm(gen, t)).cwiseAbs().maxCoeff(), 1e-12) << t;
  for (double s : {0.1, 0.5, 1.0})
    for (double t : {0.2, 1.0, 3.0}) {
      const Matrix lhs = uniformized_exponential(gen, s + t);
      const Matrix rhs = uniformized_exponential(gen, s) * uniformized_exponential(gen, t);
      EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-9);
    }
  EXPECT_THROW(uniformized_exponential(gen, -1.0), DomainError);
}
