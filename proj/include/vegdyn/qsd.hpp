#pragma once

// Quasi-stationary distributions of the single-patch grass-forest chain:
// the tridiagonal generator restricted to non-absorbed states, its dominant
// left eigenpair, and sweeps over (N, Jbar).

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vegdyn/model.hpp"

namespace vegdyn::qsd {

// printed: entries as published (site rates carry a global 1/N).
// per_event: every entry multiplied by N, the rate at which events occur in
// the N-site simulation.
enum class TimeScale { printed, per_event };

std::string to_string(TimeScale s);
TimeScale time_scale_from_string(std::string_view s);

// Row/column i is the configuration with k = i + 1 forest sites.
struct RestrictedGenerator {
  std::size_t n = 0;
  double jbar = 0.0;
  std::vector<double> diag;
  std::vector<double> super;  // super[i] = Q(i, i+1), i < n-1
  std::vector<double> sub;    // sub[i] = Q(i, i-1) for i >= 1; sub[0] is the leak to all-grass
  TimeScale scale = TimeScale::printed;

  double leak() const { return sub.front(); }
  double at(std::size_t i, std::size_t j) const;
};

RestrictedGenerator build_restricted_generator(std::size_t n, double jbar, const SigmoidParams& phi,
                                               TimeScale scale = TimeScale::printed);

struct QsdResult {
  double rho = 0.0;
  std::vector<double> qsd;  // over k = 1..N forest sites
  double residual = 0.0;    // max |(xQ + rho x)_i|
  std::size_t iterations = 0;
};

// Inverse power iteration on Q^T with zero shift.
QsdResult dominant_eigenpair(const RestrictedGenerator& gen, double tol = 1e-12,
                             std::size_t max_iterations = 10000);

// Solves (-Q^T) y = b. Subtraction-free elimination for the M-matrix case;
// partial-pivoting fallback if a pivot vanishes.
std::vector<double> solve_negative_transpose(const RestrictedGenerator& gen, std::span<const double> b);

// Grass fraction (N - k) / N of row i.
double grass_fraction(std::size_t n, std::size_t i);

struct SweepRow {
  std::size_t n = 0;
  double jbar = 0.0;
  QsdResult result;
};

struct Sweep {
  std::vector<SweepRow> rows;
  // (N, jbar) pairs where rho increased with jbar.
  std::vector<std::pair<std::size_t, double>> monotonicity_violations;
};

Sweep qsd_sweep(std::span<const std::size_t> n_list, std::span<const double> jbar_grid, const SigmoidParams& phi,
                TimeScale scale = TimeScale::printed, double tol = 1e-12);

}  // namespace vegdyn::qsd
