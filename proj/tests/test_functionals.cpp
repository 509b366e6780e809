#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

using namespace msplice;
using msplice::testing::three_state;

namespace {

Ext<Site> site(std::size_t i) { return Ext<Site>(Site{1, i}); }

JumpPath<Site> ab_path(double horizon = 2.0) { return JumpPath<Site>({{0.0, site(0)}, {1.0, site(1)}}, horizon); }

RateFunction<Site> ab_rates() { return RateFunction<Site>::on_sites({2.0, 3.0}, 1); }

}  // namespace

TEST(AdditiveFunctional, ZeroAndConstantRates) {
  const auto p = ab_path(5.0);
  EXPECT_EQ(additive_integral(p, RateFunction<Site>::constant(0.0), 5.0), 0.0);
  EXPECT_NEAR(additive_integral(p, RateFunction<Site>::constant(1.5), 3.0), 4.5, 1e-15);
}

TEST(AdditiveFunctional, HandExample) {
  const auto p = ab_path();
  EXPECT_NEAR(additive_integral(p, ab_rates(), 1.5), 2.0 * 1.0 + 3.0 * 0.5, 1e-15);
  const MfTrace m = mf_from_af(additive_trace(p, ab_rates()));
  EXPECT_NEAR(m.value(1.5), std::exp(-3.5), 1e-15);
  EXPECT_EQ(m.value(0.0), 1.0);
}

TEST(AdditiveFunctional, AdditiveUnderShift) {
  const RateModel m = three_state();
  const auto c = RateFunction<Site>::on_sites({0.3, 1.1, 2.4}, 1);
  for (std::uint64_t k = 0; k < 40; ++k) {
    RngStream rng(21, k);
    const auto p = sample_ctmc_path(m, k % 3, 6.0, rng);
    for (double s : {0.7, 2.5})
      for (double t : {0.5, 3.0}) {
        const double lhs = additive_integral(p, c, s + t);
        const double rhs = additive_integral(p, c, s) + additive_integral(shift_path(p, s), c, t);
        EXPECT_NEAR(lhs, rhs, 1e-12);
        const MfTrace whole = mf_from_af(additive_trace(p, c));
        const MfTrace tail = mf_from_af(additive_trace(shift_path(p, s), c));
        EXPECT_NEAR(whole.value(s + t), whole.value(s) * tail.value(t), 1e-12);
      }
  }
}

TEST(AdditiveFunctional, GridPathUsesLeftEndpoints) {
  const GridPath<double> g(0.5, {1.0, 2.0, 4.0});
  const RateFunction<double> c([](double x) { return x; }, 10.0);
  EXPECT_NEAR(additive_integral(g, c, 1.0), 0.5 * 1.0 + 0.5 * 2.0, 1e-15);
  EXPECT_NEAR(additive_integral(g, c, 0.75), 0.5 + 0.25 * 2.0, 1e-15);
  const auto q = shift_path(g, 0.5);
  EXPECT_NEAR(additive_integral(g, c, 1.0), additive_integral(g, c, 0.5) + additive_integral(q, c, 0.5), 1e-12);
}

TEST(AdditiveFunctional, RateBoundEnforced) {
  const RateFunction<Site> c([](const Site&) { return 5.0; }, 2.0);
  try {
    additive_trace(ab_path(), c);
    FAIL() << "expected RateBoundError";
  } catch (const RateBoundError& e) {
    EXPECT_EQ(e.value(), 5.0);
  }
  EXPECT_THROW(RateFunction<Site>::constant(-1.0), DomainError);
}

TEST(AdditiveFunctional, FirstPassageInvertsTrace) {
  const AfTrace a = additive_trace(ab_path(), ab_rates());
  EXPECT_NEAR(a.first_passage(1.0).time(), 0.5, 1e-15);
  EXPECT_NEAR(a.first_passage(3.5).time(), 1.5, 1e-15);
  EXPECT_TRUE(a.first_passage(100.0).censored());
  EXPECT_EQ(a.first_passage(0.0).time(), 0.0);
}

TEST(TerminalRule, DeterministicTimeUnderShift) {
  const auto p = ab_path(5.0);
  const TerminalRule<Site> rule = DeterministicTime{3.0};
  EXPECT_EQ(terminal_time(p, rule).time(), 3.0);
  EXPECT_DOUBLE_EQ(terminal_time(shift_path(p, 1.25), rule).time(), 1.75);
  EXPECT_EQ(terminal_time(shift_path(p, 4.0), rule).time(), 0.0);
  EXPECT_TRUE(terminal_time(p, TerminalRule<Site>{DeterministicTime{6.0}}).censored());
}

TEST(TerminalRule, HittingClosedSets) {
  const auto p = ab_path();
  const TerminalRule<Site> none = HitClosedSet<Site>{SiteSet{1, {}}};
  EXPECT_TRUE(terminal_time(p, none).censored());
  const MfTrace m = mf_terminal(p, none);
  EXPECT_EQ(m.value(2.0), 1.0);

  const TerminalRule<Site> hit_b = HitClosedSet<Site>{SiteSet{1, {1}}};
  const StoppingTime tau = terminal_time(p, hit_b);
  EXPECT_EQ(tau.time(), 1.0);
  EXPECT_EQ(path_eval(p, tau.time()), site(1));
  const MfTrace ind = mf_terminal(p, hit_b);
  EXPECT_EQ(ind.value(0.999), 1.0);
  EXPECT_EQ(ind.value(1.0), 0.0);

  const TerminalRule<Site> hit_a = HitClosedSet<Site>{SiteSet{1, {0}}};
  EXPECT_EQ(terminal_time(p, hit_a).time(), 0.0);
}

TEST(TerminalRule, OuLevelCrossingMatchesScan) {
  const auto ou = DiffusionModel::ornstein_uhlenbeck(1.0, 1.0, 1e-2);
  const IntervalSet above{{{1.0, std::numeric_limits<double>::infinity()}}};
  for (std::uint64_t k = 0; k < 50; ++k) {
    RngStream rng(22, k);
    const auto p = sample_sde_path(ou, 0.0, 5.0, rng);
    std::optional<double> scan;
    for (std::size_t i = 0; i < p.values().size() && !scan; ++i)
      if (p.values()[i].point() >= 1.0) scan = 0.01 * static_cast<double>(i);
    const StoppingTime tau = hitting_time(p, above);
    ASSERT_EQ(tau.censored(), !scan.has_value());
    if (scan) {
      EXPECT_NEAR(tau.time(), *scan, 1e-12);
      EXPECT_GE(path_eval(p, tau.time()).point(), 1.0);
    }
  }
}

TEST(PathLifetime, Examples) {
  EXPECT_TRUE(path_lifetime(ab_path()).censored());
  const JumpPath<Site> dead({{0.0, Ext<Site>::dead()}}, 1.0);
  EXPECT_EQ(path_lifetime(dead).time(), 0.0);
  const JumpPath<Site> later({{0.0, site(0)}, {0.75, Ext<Site>::dead()}}, 1.0);
  EXPECT_EQ(path_lifetime(later).time(), 0.75);
  const GridPath<double> g(0.5, {1.0, 2.0, Ext<double>::dead()});
  EXPECT_EQ(path_lifetime(g).time(), 1.0);
}

TEST(LsIncrement, Examples) {
  const MfTrace one = MfTrace::indicator(StoppingTime::censored_at(2.0));
  EXPECT_EQ(ls_increment(one, 0.0, 2.0), 0.0);

  const MfTrace e = mf_from_af(additive_trace(ab_path(), RateFunction<Site>::constant(1.0)));
  EXPECT_NEAR(ls_increment(e, 0.0, 1.0), 1.0 - std::exp(-1.0), 1e-15);
  const double parts = ls_increment(e, 0.0, 0.3) + ls_increment(e, 0.3, 1.1) + ls_increment(e, 1.1, 2.0);
  EXPECT_NEAR(parts, ls_increment(e, 0.0, 2.0), 1e-15);
  EXPECT_THROW(ls_increment(e, 1.0, 1.0), DomainError);

  const MfTrace ind = MfTrace::indicator(StoppingTime::at(1.0, 2.0));
  EXPECT_EQ(ls_increment(ind, 0.5, 1.0), 1.0);
  EXPECT_EQ(ls_increment(ind, 0.0, 0.5), 0.0);
}

TEST(MultiplicativeFunctional, RightDerivativeIsMinusRate) {
  // E_x[M_h] = (e^{h(L - c)} 1)(x), so (E_x[M_h] - 1)/h + c(x) = O(h).
  const RateModel m = three_state();
  const std::vector<double> c{0.4, 1.3, 2.2};
  const Matrix gen = killed_generator(m, c);
  for (Eigen::Index x = 0; x < 3; ++x) {
    std::vector<std::pair<double, double>> pts;
    for (double h : {1e-2, 5e-3, 2.5e-3, 1.25e-3}) {
      const double mh = (msplice::testing::expm(gen, h) * Vector::Ones(3))(x);
      pts.emplace_back(h, std::abs((mh - 1.0) / h + c[static_cast<std::size_t>(x)]));
    }
    EXPECT_TRUE(fit_slope(pts).pass) << "state " << x;
  }
}

TEST(MultiplicativeFunctional, BreakpointsListed) {
  const MfTrace ind = MfTrace::indicator(StoppingTime::at(1.0, 2.0));
  EXPECT_EQ(ind.breakpoints(), (std::vector<double>{0.0, 1.0, 2.0}));
  const MfTrace e = mf_from_af(additive_trace(ab_path(), ab_rates()));
  EXPECT_EQ(e.breakpoints(), (std::vector<double>{0.0, 1.0, 2.0}));
  EXPECT_FALSE(e.is_indicator());
}
