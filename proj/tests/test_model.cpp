#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "vegdyn/errors.hpp"
#include "vegdyn/model.hpp"
#include "vegdyn/rng.hpp"

using namespace vegdyn;

namespace {

ModelConfig gf_patch(double jbar = 1.1) {
  ModelConfig c;
  c.family = Family::gf;
  c.domain = Domain::patch_set(1);
  c.jbar = jbar;
  return c;
}

}  // namespace

TEST(Sigmoid, MatchesClosedForm) {
  const SigmoidParams p = defaults::kPhi;
  for (double x : {0.0, 0.1, 0.4, 0.7, 1.0}) {
    const double expect = p.lo + (p.hi - p.lo) / (1.0 + std::exp(-(x - p.center) / p.slope));
    EXPECT_NEAR(eval_sigmoid(p, x), expect, 1e-15);
  }
  // clamped outside [0, 1]
  EXPECT_DOUBLE_EQ(eval_sigmoid(p, 1.5), eval_sigmoid(p, 1.0));
  EXPECT_DOUBLE_EQ(eval_sigmoid(p, -0.2), eval_sigmoid(p, 0.0));
  EXPECT_THROW(eval_sigmoid(p, std::nan("")), InvalidInput);
}

TEST(Sigmoid, PhiAtOneNearTranscriticalValue) { EXPECT_NEAR(eval_sigmoid(defaults::kPhi, 1.0), 0.8999951, 1e-7); }

TEST(Sigmoid, LipschitzBoundsSlopes) {
  for (const auto& p : {defaults::kPhi, defaults::kOmega}) {
    const double l = sigmoid_lipschitz(p);
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
      const double x = i / 10000.0, h = 1e-6;
      worst = std::max(worst, std::abs(eval_sigmoid(p, x + h) - eval_sigmoid(p, x)) / h);
    }
    EXPECT_LE(worst, l * (1 + 1e-4));
    EXPECT_GE(worst, 0.99 * l);
  }
}

TEST(Kernel, RingGaussianIntegratesToOneAgainstUniformMeasure) {
  for (double sigma : {0.05, 0.3, 1.0, 3.0}) {
    const double L = 5.0;
    const Kernel k = Kernel::gaussian_ring(sigma, L);
    const int n = 200000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += k(0.7, (i + 0.5) * L / n);
    EXPECT_NEAR(sum / n, 1.0, 1e-9) << "sigma " << sigma;
  }
}

TEST(Kernel, LineGaussianHasUnitLebesgueMass) {
  const Kernel k = Kernel::gaussian_line(0.02, 1.1);
  double sum = 0.0;
  const double h = 1e-5;
  for (double x = -1; x < 1; x += h) sum += k(0.0, x) * h;
  EXPECT_NEAR(sum, 1.1, 1e-6);
  EXPECT_NEAR(k.sup_norm(), 1.1 / (0.02 * std::sqrt(2 * M_PI)), 1e-12);
}

TEST(Kernel, SymmetricAndPeriodic) {
  Rng rng = make_stream(3);
  const Kernel k = Kernel::gaussian_ring(0.4, 5.0, 0.9);
  for (int i = 0; i < 200; ++i) {
    const double a = 5 * uniform01(rng), b = 5 * uniform01(rng);
    EXPECT_DOUBLE_EQ(k(a, b), k(b, a));
    EXPECT_NEAR(k(a, b), k(a + 5.0, b), 1e-12);
    EXPECT_LE(k(a, b), k.sup_norm() * (1 + 1e-15));
  }
}

TEST(Kernel, PatchMatrixLookupAndErrors) {
  const Kernel k = Kernel::patch_matrix(2, {1, 2, 3, 4}, 0.5);
  EXPECT_DOUBLE_EQ(k(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(k(1, 0), 1.5);
  EXPECT_DOUBLE_EQ(k.sup_norm(), 2.0);
  EXPECT_THROW(k(2, 0), std::out_of_range);
  EXPECT_THROW(Kernel::patch_matrix(2, {1, 2, 3}), ValidationError);
  EXPECT_THROW(Kernel::gaussian_line(0.0), ValidationError);
  EXPECT_THROW(Kernel::constant(1.0, -1.0), ValidationError);
}

TEST(SiteMeasure, TrapezoidInverseCdfRoundTrip) {
  const auto m = SiteMeasure::trapezoid(0.4, 1.2, Domain::interval(1.0));
  for (double u : {0.0, 0.1, 0.5, 0.77, 1.0}) EXPECT_NEAR(m.cdf(m.inverse_cdf(u)), u, 1e-14);
  EXPECT_THROW(SiteMeasure::trapezoid(0.5, 1.2, Domain::interval(1.0)), ValidationError);
}

TEST(SiteMeasure, TrapezoidSampleMeanMatches) {
  // mean of density 0.4 + 1.2 x on [0, 1] is 0.4/2 + 1.2/3 = 0.6
  const auto m = SiteMeasure::trapezoid(0.4, 1.2, Domain::interval(1.0));
  const auto x = sample_sites(m, 200000, 11);
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
  EXPECT_NEAR(mean, 0.6, 4 * std::sqrt(0.08 / 200000.0));
}

TEST(SiteMeasure, DiscreteNeverSamplesEmptyAtom) {
  const auto m = SiteMeasure::discrete({0.5, 0.0, 0.5});
  for (double x : sample_sites(m, 10000, 5)) EXPECT_NE(x, 1.0);
  EXPECT_THROW(SiteMeasure::discrete({0.5, 0.6}), ValidationError);
}

TEST(InitialLaw, SegmentsAreClosed) {
  const auto law = InitialLaw::piecewise({1, 0}, {{1.0, 2.5, {0, 1}}});
  EXPECT_EQ(law.at(0.99)[1], 0.0);
  EXPECT_EQ(law.at(1.0)[1], 1.0);
  EXPECT_EQ(law.at(2.5)[1], 1.0);
  EXPECT_EQ(law.at(2.5000001)[1], 0.0);
  EXPECT_EQ(law.region_count(), 2u);
}

TEST(BuildModel, GfTopology) {
  const ModelSpec m = build_model(gf_patch());
  EXPECT_EQ(m.state_count(), 2u);
  EXPECT_EQ(m.states().label(0), "G");
  EXPECT_EQ(m.states().absorbing(), StateIndex{0});
  EXPECT_EQ(m.transitions().size(), 2u);
  EXPECT_EQ(m.field_keys().size(), 2u);
  // J_F has amplitude jbar
  EXPECT_DOUBLE_EQ(m.kernels()[1].kernel(0, 0), 1.1);
  // default initial law is uniform over states
  EXPECT_DOUBLE_EQ(m.initial_law().at(0)[0], 0.5);
}

TEST(BuildModel, GstfHasEightTransitionsAndBounds) {
  ModelConfig c = gf_patch(0.25);
  c.family = Family::gstf;
  const ModelSpec m = build_model(c);
  EXPECT_EQ(m.state_count(), 4u);
  EXPECT_EQ(m.transitions().size(), 8u);
  // G leaves via beta * T-field and jbar * F-field
  EXPECT_NEAR(m.outgoing_bound(0), 0.4 + 0.25, 1e-15);
  // S: jbar, omega, mu
  EXPECT_NEAR(m.outgoing_bound(1), 0.25 + eval_sigmoid(defaults::kOmega, 0.0) + defaults::kMu, 1e-12);
  // T: jbar, nu
  EXPECT_NEAR(m.outgoing_bound(2), 0.25 + defaults::kNu, 1e-15);
}

TEST(BuildModel, ValidationCollectsIssues) {
  ModelConfig c = gf_patch();
  c.jbar = -1.0;
  c.phi.slope = 0.0;
  try {
    build_model(c);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_GE(e.issues().size(), 2u);
  }
}

TEST(BuildModel, InitialLawMustSumToOne) {
  ModelConfig c = gf_patch();
  c.initial.background = {{"G", 0.7}, {"F", 0.7}};
  EXPECT_THROW(build_model(c), ValidationError);
  c.initial.background = {{"G", 0.7}, {"X", 0.3}};
  EXPECT_THROW(build_model(c), ValidationError);
}

TEST(BuildModel, GenericRejectsUnknownKernelAndSelfLoop) {
  ModelConfig c;
  c.family = Family::generic;
  c.domain = Domain::patch_set(1);
  c.states = {"A", "B"};
  c.kernels.push_back({"K", Kernel::patch_matrix(1, {1.0})});
  c.transitions.push_back({"A", "B", "linear", 0.0, {}, std::string("Nope"), std::string("B")});
  EXPECT_THROW(build_model(c), ValidationError);
  c.transitions = {{"A", "A", "constant", 1.0, {}, std::nullopt, std::nullopt}};
  EXPECT_THROW(build_model(c), ValidationError);
  c.transitions = {{"A", "B", "constant", 1.0, {}, std::nullopt, std::nullopt},
                   {"B", "A", "linear", 0.0, {}, std::string("K"), std::string("A")}};
  const ModelSpec m = build_model(c);
  EXPECT_EQ(m.field_keys().size(), 1u);
}

TEST(BuildModel, GaussianKernelOnPatchesRejected) {
  ModelConfig c;
  c.family = Family::generic;
  c.domain = Domain::patch_set(2);
  c.states = {"A", "B"};
  c.kernels.push_back({"K", Kernel::gaussian_line(0.1)});
  c.transitions = {{"A", "B", "linear", 0.0, {}, std::string("K"), std::string("B")}};
  EXPECT_THROW(build_model(c), ValidationError);
}

TEST(Rng, StreamsAreReproducibleAndDistinct) {
  Rng a = make_stream(42, 1), b = make_stream(42, 1), c = make_stream(42, 2);
  for (int i = 0; i < 10; ++i) {
    const auto x = a();
    EXPECT_EQ(x, b());
    EXPECT_NE(x, c());
  }
  Rng d = make_stream(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = uniform_open0(d);
    EXPECT_GT(u, 0.0);
    EXPECT_LE(u, 1.0);
  }
}
