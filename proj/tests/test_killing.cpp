#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

using namespace msplice;
using msplice::testing::exp_cdf;
using msplice::testing::exp_kill;
using msplice::testing::expm;
using msplice::testing::three_state;

namespace {

Ext<Site> site(std::size_t i) { return Ext<Site>(Site{1, i}); }

JumpPath<Site> ab_path(double horizon = 5.0) { return JumpPath<Site>({{0.0, site(0)}, {1.0, site(1)}}, horizon); }

}  // namespace

TEST(ExpClock, ZeroRateNeverKills) {
  const Path<Site> p = ab_path();
  for (std::uint64_t k = 0; k < 100; ++k) {
    RngStream clock(31, k);
    EXPECT_TRUE(sample_lifetime_exp_clock(p, RateFunction<Site>::constant(0.0), clock).censored());
  }
}

TEST(ExpClock, ConstantRateGivesExponentialLifetime) {
  const Path<Site> p = JumpPath<Site>({{0.0, site(0)}}, 1e6);
  const double lambda = 0.8;
  std::vector<double> taus;
  for (std::uint64_t k = 0; k < 20000; ++k) {
    RngStream clock(32, k);
    taus.push_back(sample_lifetime_exp_clock(p, RateFunction<Site>::constant(lambda), clock).time());
  }
  EXPECT_GT(ks_statistic(taus, [&](double x) { return exp_cdf(lambda, x); }).p_value, 1e-3);
}

TEST(ExpClock, PiecewiseInversion) {
  // c = 2 on [0, 1), then 0: tau = E/2 when E < 2, censored otherwise.
  const Path<Site> p = ab_path();
  const auto c = RateFunction<Site>::on_sites({2.0, 0.0}, 1);
  for (std::uint64_t k = 0; k < 200; ++k) {
    RngStream clock(33, k), copy(33, k);
    const double e = copy.exponential();
    const StoppingTime tau = sample_lifetime_exp_clock(p, c, clock);
    if (e < 2.0) {
      ASSERT_FALSE(tau.censored());
      EXPECT_NEAR(tau.time(), e / 2.0, 1e-14);
    } else {
      EXPECT_TRUE(tau.censored());
    }
  }
}

TEST(KillPath, Examples) {
  const auto p = ab_path(2.0);
  EXPECT_EQ(kill_path(p, StoppingTime::censored_at(2.0)), p);
  const auto at0 = kill_path(p, StoppingTime::at(0.0, 2.0));
  ASSERT_EQ(at0.events().size(), 1u);
  EXPECT_TRUE(at0.events()[0].state.is_dead());
  const auto mid = kill_path(p, StoppingTime::at(1.5, 2.0));
  const std::vector<JumpEvent<Site>> want{{0.0, site(0)}, {1.0, site(1)}, {1.5, Ext<Site>::dead()}};
  EXPECT_EQ(mid.events(), want);
  EXPECT_EQ(path_lifetime(mid).time(), 1.5);
}

TEST(SampleKilled, LifetimeIsKilledPathLifetime) {
  const auto process = exp_kill(three_state(), {0.5, 1.0, 2.0});
  for (std::uint64_t k = 0; k < 300; ++k) {
    const auto s = sample_killed(process, Site{1, 0}, 3.0, RngStream(34, k));
    const StoppingTime z = path_lifetime(s.killed);
    ASSERT_EQ(s.lifetime.censored(), z.censored());
    if (!z.censored()) {
      EXPECT_EQ(s.lifetime.time(), z.time());
      EXPECT_EQ(*s.exit, path_left_limit(s.base, z.time()));
    }
    for (double t : {0.0, 0.5, 1.5, 3.0})
      EXPECT_EQ(path_eval(s.killed, t).alive(), s.lifetime.after(t));
  }
}

TEST(SampleKilled, DeadStartAndStartInsideTarget) {
  const KilledProcess<RateModel> process{three_state(), Terminal<Site>{HitClosedSet<Site>{SiteSet{1, {0}}}}};
  const auto d = sample_killed(process, Ext<Site>::dead(), 2.0, RngStream(35, 0));
  EXPECT_EQ(d.lifetime.time(), 0.0);
  EXPECT_TRUE(path_eval(d.killed, 1.0).is_dead());
  const auto in = sample_killed(process, Site{1, 0}, 2.0, RngStream(35, 1));
  EXPECT_EQ(in.lifetime.time(), 0.0);
  EXPECT_TRUE(in.exit->is_dead());
  EXPECT_TRUE(path_eval(in.killed, 0.0).is_dead());
}

TEST(BlockRun, AgreesWithFullSample) {
  const auto process = exp_kill(three_state(), {0.5, 1.0, 2.0});
  for (std::uint64_t k = 0; k < 300; ++k) {
    const RngStream rng(36, k);
    const auto full = sample_killed(process, Site{1, 2}, 4.0, rng);
    RngStream path_rng = rng.lane(0), clock = rng.lane(1);
    const auto run = sample_block_run(process, Site{1, 2}, 4.0, path_rng, clock);
    ASSERT_EQ(run.lifetime, full.lifetime);
    EXPECT_EQ(run.exit, full.exit);
  }
}

TEST(KilledSemigroup, ConstantRateSurvival) {
  const double lambda = 0.9, t = 1.3;
  const auto process = exp_kill(three_state(), {lambda, lambda, lambda});
  const auto one = site_function({1.0, 1.0, 1.0});
  for (KillMode mode : {KillMode::Weighted, KillMode::Hard}) {
    const auto r = killed_semigroup_mc(process, one, t, Site{1, 0}, 40000, mode, {41, 0, 1});
    EXPECT_LT(std::abs(r.mean - std::exp(-lambda * t)), 3.0 * r.standard_error() + 1e-12) << to_string(mode);
  }
}

TEST(KilledSemigroup, StateDependentRateBothModesMatchExact) {
  const RateModel m = three_state();
  const std::vector<double> c{0.2, 1.5, 0.7};
  const auto process = exp_kill(m, c);
  const auto f = site_function({1.0, -0.5, 2.0});
  const Vector fv = to_vector({1.0, -0.5, 2.0});
  const auto tab = killed_semigroup_mc_table(process, {f}, {0.5, 2.0}, Site{1, 1}, 60000, {42, 0, 1});
  for (std::size_t ti = 0; ti < 2; ++ti) {
    const double exact = (expm(killed_generator(m, c), tab.times[ti]) * fv)(1);
    const auto& w = tab.weighted[ti][0];
    const auto& h = tab.hard[ti][0];
    EXPECT_LT(std::abs(w.mean - exact), 3.0 * w.standard_error());
    EXPECT_LT(std::abs(h.mean - exact), 3.0 * h.standard_error());
    EXPECT_TRUE(agree_within(w, h, 3.0));
  }
}

TEST(KilledSemigroup, ZeroRateIsPlainSemigroup) {
  const RateModel m = three_state();
  const auto process = exp_kill(m, {0.0, 0.0, 0.0});
  const auto f = site_function({0.0, 1.0, 0.0});
  const double exact = expm(m.rates(), 1.0)(0, 1);
  const auto r = killed_semigroup_mc(process, f, 1.0, Site{1, 0}, 40000, KillMode::Hard, {43, 0, 1});
  EXPECT_LT(std::abs(r.mean - exact), 3.0 * r.standard_error());
}

TEST(KilledSemigroup, UnboundedFunctionAborts) {
  const auto process = exp_kill(three_state(), {1.0, 1.0, 1.0});
  BoundedFunction<Site> f{[](const Site& s) { return s.index == 2 ? 10.0 : 0.0; }, 1.0, "spike"};
  EXPECT_THROW(killed_semigroup_mc(process, f, 2.0, Site{1, 0}, 2000, KillMode::Weighted, {44, 0, 1}), EstimatorAbort);
}

TEST(KilledSemigroup, HardTerminalKillingMatchesTabooSemigroup) {
  const RateModel m = three_state();
  const SiteSet target{1, {2}};
  const KilledProcess<RateModel> process{m, Terminal<Site>{HitClosedSet<Site>{target}}};
  const auto f = site_function({1.0, 2.0, 0.0});
  const Vector fv = to_vector({1.0, 2.0, 0.0});
  const double exact = (taboo_semigroup_exact(m, target, 1.2) * fv)(0);
  const auto r = killed_semigroup_mc(process, f, 1.2, Site{1, 0}, 40000, KillMode::Hard, {45, 0, 1});
  EXPECT_LT(std::abs(r.mean - exact), 3.0 * r.standard_error());
  // oracle: taboo semigroup is the exponential of L restricted to the complement
  Matrix sub = m.rates().topLeftCorner(2, 2);
  EXPECT_NEAR((expm(sub, 1.2) * fv.head(2))(0), exact, 1e-12);
}

TEST(ExitJoint, SingleKillingStateCarriesAllMass) {
  const auto process = exp_kill(three_state(), {0.0, 1.5, 0.0});
  const std::vector<double> edges{0.0, 1.0, 3.0};
  const auto h = exit_joint_histogram(process, 0, 5000, edges, {46, 0, 1});
  for (const auto& row : h.counts) {
    EXPECT_EQ(row[0], 0.0);
    EXPECT_EQ(row[2], 0.0);
  }
  const JointLaw law = exit_joint_oracle(three_state(), {0.0, 1.5, 0.0}, 0, edges);
  EXPECT_EQ(law.probs[0][0], 0.0);
  EXPECT_GT(law.probs[0][1], 0.0);
}

TEST(ExitJoint, ConstantRateFactorizes) {
  const RateModel m = three_state();
  const double c = 0.8;
  const std::vector<double> edges{0.0, 0.5, 1.0, 2.0, 4.0};
  const JointLaw law = exit_joint_oracle(m, {c, c, c}, 0, edges);
  for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
    double total = 0.0;
    for (double p : law.probs[k]) total += p;
    EXPECT_NEAR(total, std::exp(-c * edges[k]) - std::exp(-c * edges[k + 1]), 1e-10);
  }
  EXPECT_NEAR(law.censored, std::exp(-c * 4.0), 1e-10);
}

TEST(ExitJoint, HistogramMatchesOracle) {
  const RateModel m = three_state();
  const std::vector<double> c{0.3, 1.0, 2.0}, edges{0.0, 0.5, 1.0, 2.0, 4.0};
  const auto h = exit_joint_histogram(exp_kill(m, c), 0, 100000, edges, {47, 0, 1});
  EXPECT_GT(joint_chi_square(h, exit_joint_oracle(m, c, 0, edges)).p_value, 0.01);
}

TEST(KilledGenerator, ZeroRateAndConstantRateTaylorTerm) {
  const RateModel m = three_state();
  const std::vector<double> hs{1e-2, 5e-3, 2.5e-3, 1.25e-3};
  const Vector f = to_vector({1.0, 0.0, -1.0});
  EXPECT_TRUE(killed_generator_check(m, {0.0, 0.0, 0.0}, f, hs).pass);

  // error(h)/h -> ||M^2 f||_inf / 2 for M = L - c
  const std::vector<double> c(3, 1.1);
  const Matrix gen = killed_generator(m, c);
  const double lead = 0.5 * (gen * gen * f).cwiseAbs().maxCoeff();
  const auto errs = killed_generator_errors(m, c, f, {1e-4});
  EXPECT_NEAR(errs[0].second / 1e-4, lead, 1e-2 * lead);
}

TEST(KilledGenerator, RandomModelsAndBandFailure) {
  const std::vector<double> hs{1e-2, 5e-3, 2.5e-3, 1.25e-3};
  RngStream rng(48, 0);
  for (int k = 0; k < 20; ++k) {
    const RateModel m = random_rate_model(4, 0.5, 2.0, 1, rng);
    const auto c = random_values(4, 0.0, 2.0, rng);
    const Vector f = to_vector(random_values(4, -1.0, 1.0, rng));
    EXPECT_TRUE(killed_generator_check(m, c, f, hs).pass);
  }
  const RateModel m = three_state();
  try {
    killed_generator_check(m, {0.5, 0.5, 0.5}, to_vector({1.0, 0.0, 0.0}), hs, {1e-3, 3.0, 1.5, 2.0});
    FAIL() << "expected GeneratorMismatch";
  } catch (const GeneratorMismatch& e) {
    EXPECT_EQ(e.report().points.size(), 4u);
    EXPECT_NEAR(e.report().slope, 1.0, 0.1);
  }
}

TEST(MarkovProperty, KilledProcessPassesStratifiedTest) {
  const auto process = exp_kill(three_state(), {0.2, 0.5, 0.1});
  const auto rec = killed_strata_records(process, 0, 0.5, 1.0, 1.0, 50000, {49, 0, 1});
  EXPECT_TRUE(stratified_independence(rec, 1e-3).pass);
}

TEST(KilledSemigroup, ChapmanKolmogorovForExactQ) {
  const RateModel m = three_state();
  const std::vector<double> c{0.4, 0.0, 1.7};
  const std::span<const double> cs(c);
  const Matrix q1 = ctmc_semigroup_exact(m, cs, 0.4).matrix();
  const Matrix q2 = ctmc_semigroup_exact(m, cs, 1.1).matrix();
  const Matrix q3 = ctmc_semigroup_exact(m, cs, 1.5).matrix();
  EXPECT_LT((q1 * q2 - q3).cwiseAbs().maxCoeff(), 1e-9);
}
