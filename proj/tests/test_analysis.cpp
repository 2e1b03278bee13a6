#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "vegdyn/analysis.hpp"
#include "vegdyn/errors.hpp"

using namespace vegdyn;
using analysis::EquilibriumKind;
using analysis::Stability;

namespace {

double h(double g, double jbar, double rho = 1.0) {
  return eval_sigmoid(defaults::kPhi, rho * g) - jbar * rho * g;
}

// Sign changes of h on a fine grid, excluding G near 1.
std::size_t oracle_root_count(double jbar, double rho = 1.0) {
  std::size_t c = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double a = double(i) / n, b = double(i + 1) / n;
    if (b > 1 - 1e-6) break;
    if ((h(a, jbar, rho) > 0) != (h(b, jbar, rho) > 0)) ++c;
  }
  return c;
}

}  // namespace

TEST(Equilibria, BistableAtPointSeven) {
  const auto e = analysis::equilibria_2state(0.7, defaults::kPhi);
  ASSERT_EQ(e.size(), 3u);
  EXPECT_EQ(e[0].kind, EquilibriumKind::trivial);
  EXPECT_EQ(e[0].grass, 1.0);
  EXPECT_EQ(e[0].stability, Stability::stable);
  EXPECT_NEAR(e[1].grass, 0.15060, 1e-4);
  EXPECT_EQ(e[1].stability, Stability::stable);
  EXPECT_NEAR(e[2].grass, 0.31274, 1e-4);
  EXPECT_EQ(e[2].stability, Stability::unstable);
  for (std::size_t i = 1; i < e.size(); ++i) EXPECT_LT(std::abs(h(e[i].grass, 0.7)), 1e-12);
  EXPECT_EQ(e.size() - 1, oracle_root_count(0.7));
}

TEST(Equilibria, ThreeInteriorRootsAtOnePointOne) {
  const auto e = analysis::equilibria_2state(1.1, defaults::kPhi);
  ASSERT_EQ(e.size(), 4u);
  EXPECT_EQ(e[0].stability, Stability::unstable);
  EXPECT_NEAR(e[1].grass, 0.09246, 1e-4);
  EXPECT_NEAR(e[2].grass, 0.37889, 1e-4);
  EXPECT_NEAR(e[3].grass, 0.81801, 1e-4);
  EXPECT_EQ(e[1].stability, Stability::stable);
  EXPECT_EQ(e[2].stability, Stability::unstable);
  EXPECT_EQ(e[3].stability, Stability::stable);
}

TEST(Equilibria, RootCountMatchesGridScan) {
  for (double j = 0.1; j < 2.0; j += 0.037)
    for (double rho : {0.4, 1.0, 1.6})
      EXPECT_EQ(analysis::equilibria_2state(j, defaults::kPhi, rho).size() - 1, oracle_root_count(j, rho))
          << "jbar " << j << " rho " << rho;
}

TEST(Equilibria, StabilityAlternates) {
  // along G the interior roots of a smooth scalar field alternate in stability
  for (double j = 0.3; j < 1.8; j += 0.05) {
    const auto e = analysis::equilibria_2state(j, defaults::kPhi);
    for (std::size_t i = 2; i < e.size(); ++i) EXPECT_NE(e[i].stability, e[i - 1].stability);
  }
}

TEST(Bifurcations, SaddleNodesAndTranscritical) {
  std::vector<double> grid;
  for (int i = 0; i <= 1000; ++i) grid.push_back(0.002 * i);
  const auto s = analysis::bifurcation_sweep(grid, defaults::kPhi);
  std::vector<double> sn;
  std::optional<double> tc;
  for (const auto& b : s.bifurcations) {
    if (b.kind == analysis::Bifurcation::Kind::saddle_node) sn.push_back(b.jbar);
    else tc = b.jbar;
  }
  ASSERT_EQ(sn.size(), 2u);
  EXPECT_NEAR(sn[0], 0.5466, 2e-4);
  EXPECT_NEAR(sn[1], 1.6095, 2e-4);
  ASSERT_TRUE(tc);
  EXPECT_NEAR(*tc, eval_sigmoid(defaults::kPhi, 1.0), 1e-9);
  // saddle-node: h = 0 and h' = 0
  const double g = s.bifurcations.front().grass;
  EXPECT_LT(std::abs(h(g, sn[0])), 1e-3);
}

TEST(FitLine, ExactAndNoisyData) {
  const std::vector<double> x{1, 2, 3, 4}, y{3, 5, 7, 9};
  const auto f = analysis::fit_line(x, y);
  EXPECT_NEAR(f.slope, 2.0, 1e-14);
  EXPECT_NEAR(f.intercept, 1.0, 1e-13);
  EXPECT_NEAR(f.slope_stderr, 0.0, 1e-12);

  // three points: slope 1, residuals (0.1, -0.2, 0.1); t(0.975, 1) = 12.7062047
  const std::vector<double> x3{0, 1, 2}, y3{0.1, 0.8, 2.1};
  const auto g = analysis::fit_line(x3, y3);
  EXPECT_NEAR(g.slope, 1.0, 1e-14);
  const double se = std::sqrt((0.01 + 0.04 + 0.01) / 1.0 / 2.0);
  EXPECT_NEAR(g.slope_stderr, se, 1e-12);
  EXPECT_NEAR(g.ci_high - g.slope, 12.7062047 * se, 1e-6);
}

TEST(Pearson, KnownValuesAndDegenerate) {
  const std::vector<double> a{1, 2, 3, 4}, b{2, 4, 6, 8}, c{4, 3, 2, 1}, d{1, 1, 1, 1};
  EXPECT_NEAR(analysis::pearson(a, b), 1.0, 1e-14);
  EXPECT_NEAR(analysis::pearson(a, c), -1.0, 1e-14);
  EXPECT_TRUE(std::isnan(analysis::pearson(a, d)));
  const std::vector<double> e{1, 0, 1, 0}, f{1, 1, 0, 0};
  EXPECT_NEAR(analysis::pearson(e, f), 0.0, 1e-14);
}

TEST(Fronts, InterpolatedCrossingAndOrientation) {
  const std::vector<double> x{0, 1, 2, 3}, up{0.0, 0.2, 0.8, 1.0}, down{1.0, 0.9, 0.3, 0.0};
  const auto f = analysis::front_position(x, up, 0.5);
  ASSERT_TRUE(f);
  EXPECT_NEAR(f->position, 1.5, 1e-14);
  EXPECT_TRUE(f->forest_on_right);
  const auto g = analysis::front_position(x, down, 0.5);
  ASSERT_TRUE(g);
  EXPECT_NEAR(g->position, 1 + 0.4 / 0.6, 1e-14);
  EXPECT_FALSE(g->forest_on_right);
  const std::vector<double> flat{0.1, 0.1, 0.1, 0.1};
  EXPECT_FALSE(analysis::front_position(x, flat, 0.5));
}

TEST(Fronts, WaveSpeedSign) {
  const std::vector<double> t{0, 1, 2, 3}, p{2.0, 1.8, 1.6, 1.4};
  // forest on the right and the front moving left: forest expands
  EXPECT_NEAR(*analysis::wave_speed(t, p, true), 0.2, 1e-13);
  EXPECT_NEAR(*analysis::wave_speed(t, p, false), -0.2, 1e-13);
}

TEST(Period, RecoversSinePeriod) {
  std::vector<double> t, v;
  for (double s = 0; s <= 200; s += 0.05) {
    t.push_back(s);
    v.push_back(0.3 + 0.2 * std::sin(2 * std::numbers::pi * s / 7.3));
  }
  const auto p = analysis::estimate_period(t, v, 20, 200, 0.05);
  ASSERT_TRUE(p);
  EXPECT_NEAR(p->period, 7.3, 1e-3);
  EXPECT_LT(p->relative_spread, 1e-3);
  EXPECT_LT(p->max_consecutive_change, 1e-3);
  // hysteresis suppresses noise-scale wiggles
  std::vector<double> flat(t.size(), 0.3);
  for (std::size_t i = 0; i < flat.size(); ++i) flat[i] += 1e-3 * std::sin(double(i));
  EXPECT_FALSE(analysis::estimate_period(t, flat, 0, 200, 0.05));
}

TEST(Convergence, SmallStudyHasOneRowPerReplica) {
  ModelConfig c;
  c.family = Family::gf;
  c.domain = Domain::patch_set(1);
  c.jbar = 1.1;
  c.initial.background = {{"G", 0.3}, {"F", 0.7}};
  const ModelSpec m = build_model(c);
  analysis::ConvergenceOptions o;
  o.replicas = 4;
  o.t_end = 3;
  const std::vector<std::size_t> ns{50, 800};
  const auto r = analysis::convergence_study(m, ns, o);
  EXPECT_EQ(r.rows.size(), 8u);
  EXPECT_EQ(r.mean_error.size(), 2u);
  EXPECT_GT(r.mean_error[0], r.mean_error[1]);
  EXPECT_LE(r.slope_ci_low, r.slope);
  EXPECT_GE(r.slope_ci_high, r.slope);
  ModelConfig ring = c;
  ring.domain = Domain::ring(5.0);
  EXPECT_THROW(analysis::convergence_study(build_model(ring), ns, o), InvalidInput);
}

TEST(Correlation, NullAndPairedStatisticsAreSmallForLargeN) {
  ModelConfig c;
  c.family = Family::gf;
  c.domain = Domain::patch_set(1);
  c.jbar = 1.1;
  c.initial.background = {{"G", 0.3}, {"F", 0.7}};
  analysis::CorrelationOptions o;
  o.replicas = 200;
  o.site_pairs = 20;
  o.t = 2.0;
  const auto r = analysis::pairwise_correlation(build_model(c), 1000, o);
  EXPECT_EQ(r.pairs_used + r.pairs_skipped, 20u);
  EXPECT_LT(r.max_abs_pooled, 0.05);
  EXPECT_LT(r.null_max_abs_pooled, 0.05);
}
