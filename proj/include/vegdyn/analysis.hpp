#pragma once

// Diagnostics: equilibria and bifurcations of the two-state equation,
// finite-N convergence and correlation studies, fronts, speeds and periods.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vegdyn/model.hpp"

namespace vegdyn::analysis {

enum class Stability { stable, unstable };
enum class EquilibriumKind { trivial, nontrivial };

std::string to_string(Stability s);
std::string to_string(EquilibriumKind k);

struct EquilibriumPoint {
  double jbar = 0.0;
  double grass = 0.0;
  Stability stability = Stability::stable;
  EquilibriumKind kind = EquilibriumKind::trivial;
  double residual = 0.0;
};

// f(G) = (1 - G) (phi(rho G) - Jbar rho G); rho = 1 is the single-patch case
// and other values give the zero-dispersal limit at local site density rho.
double rhs_2state(double grass, double jbar, const SigmoidParams& phi, double density = 1.0);

// Roots of f on [0, 1], G = 1 first, then nontrivial roots in increasing order.
std::vector<EquilibriumPoint> equilibria_2state(double jbar, const SigmoidParams& phi, double density = 1.0);

struct Bifurcation {
  enum class Kind { saddle_node, transcritical };
  Kind kind = Kind::saddle_node;
  double jbar = 0.0;
  double grass = 0.0;
};

struct BifurcationSweep {
  std::vector<EquilibriumPoint> branches;
  std::vector<Bifurcation> bifurcations;  // ordered by jbar
};

BifurcationSweep bifurcation_sweep(std::span<const double> jbar_grid, const SigmoidParams& phi);

// ---------------------------------------------------------------------------
// Finite-N studies (patch domains)

struct ConvergenceOptions {
  std::size_t replicas = 20;
  double t_end = 20.0;
  std::uint64_t seed = 1;
  double gke_step = 1e-3;
  // empty: 1, 2, ..., floor(t_end)
  std::vector<double> snapshot_times;
  bool exclude_absorbed = false;
};

struct ConvergenceRow {
  std::size_t n = 0;
  std::size_t replica = 0;
  double error = 0.0;
  bool absorbed = false;
};

struct ConvergenceResult {
  std::vector<ConvergenceRow> rows;
  std::vector<std::size_t> n_list;
  std::vector<double> mean_error;
  std::vector<double> stderr_error;
  double slope = 0.0;
  double slope_stderr = 0.0;
  double slope_ci_low = 0.0;  // 95%
  double slope_ci_high = 0.0;
};

// error(N) = mean over replicas of the sup over snapshot times of the largest
// |empirical - GKE| occupancy gap over states and patches.
ConvergenceResult convergence_study(const ModelSpec& model, std::span<const std::size_t> n_list,
                                    const ConvergenceOptions& options);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

// Ordinary least squares with a Student-t confidence interval on the slope.
LineFit fit_line(std::span<const double> x, std::span<const double> y, double confidence = 0.95);

struct CorrelationOptions {
  std::size_t site_pairs = 100;
  std::size_t replicas = 1000;
  double t = 10.0;
  std::uint64_t seed = 1;
};

struct CorrelationResult {
  // Pearson correlation of 1{X^i = x} and 1{X^j = x} pooled over every
  // (pair, replica) sample; max over states.
  double max_abs_pooled = 0.0;
  std::vector<double> pooled;  // per state, NaN if degenerate
  // Per-pair correlation across replicas; max over pairs and states.
  double max_abs_pair = 0.0;
  std::size_t pairs_used = 0;
  std::size_t pairs_skipped = 0;
  // Same statistics with the second site taken from another replica.
  double null_max_abs_pooled = 0.0;
  double null_max_abs_pair = 0.0;
};

CorrelationResult pairwise_correlation(const ModelSpec& model, std::size_t n, const CorrelationOptions& options);

// NaN when either input has zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

// ---------------------------------------------------------------------------
// Fronts, waves and periods

struct Front {
  double position = 0.0;
  bool forest_on_right = true;  // forest fraction increases across the crossing
};

// Leftmost crossing of `forest` through `threshold`, interpolated linearly.
std::optional<Front> front_position(std::span<const double> x, std::span<const double> forest,
                                    double threshold = 0.5);

// Least-squares slope of front position against time, signed so that a
// positive value means the forest is expanding.
std::optional<double> wave_speed(std::span<const double> times, std::span<const double> positions,
                                 bool forest_on_right);

struct PeriodEstimate {
  double period = 0.0;
  double relative_spread = 0.0;         // std / mean of crossing spacings
  double max_consecutive_change = 0.0;  // max |T_{k+1} - T_k| / mean
  std::vector<double> crossings;
};

// Mean spacing of upward crossings of the window mean; a crossing counts only
// after the series has dipped below mean - hysteresis.
std::optional<PeriodEstimate> estimate_period(std::span<const double> times, std::span<const double> values,
                                              double t_from, double t_to, double hysteresis = 0.0);

}  // namespace vegdyn::analysis
