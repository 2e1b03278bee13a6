#pragma once

// Deterministic solvers for the generalized Kolmogorov equations: macroscale
// ODEs on patch sets and nonlocal IDEs on rings or reflecting intervals.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vegdyn/model.hpp"

namespace vegdyn::gke {

enum class Boundary { periodic, reflecting, none };

std::string to_string(Boundary b);
Boundary boundary_from_string(std::string_view s);

struct Grid {
  Domain domain;
  Boundary boundary = Boundary::none;
  std::vector<Location> nodes;
  std::vector<double> weights;  // quadrature against q; sums to 1

  std::size_t size() const { return nodes.size(); }
};

// Ring: nodes kL/n. Interval: nodes kL/(n-1), trapezoid rule. Patches: the M
// atoms of q (n_nodes ignored).
Grid make_grid(const SiteMeasure& measure, std::size_t n_nodes, Boundary boundary);

// Natural boundary for the domain: periodic on rings, reflecting on
// intervals, none on patch sets.
Boundary default_boundary(DomainKind kind);

double quadrature(std::span<const double> f, const Grid& g);

struct ProbabilityField {
  double t = 0.0;
  std::size_t states = 0;
  std::vector<double> values;  // [node * K + state]

  std::size_t nodes() const { return states ? values.size() / states : 0; }
  double& at(std::size_t node, StateIndex s) { return values[node * states + s]; }
  double at(std::size_t node, StateIndex s) const { return values[node * states + s]; }
  // P_s at every node.
  std::vector<double> component(StateIndex s) const;
};

// Initial law evaluated at the grid nodes.
ProbabilityField initial_field(const ModelSpec& model, const Grid& g);

// Kernel matrices for one (model, grid) pair and the right-hand side built on
// them. rhs() splits node loops across OpenMP threads; rhs_reference() is a
// plain serial evaluation straight from the kernels, kept as a test oracle.
class Solver {
 public:
  Solver(const ModelSpec& model, const Grid& grid);

  const ModelSpec& model() const { return model_; }
  const Grid& grid() const { return grid_; }

  // Integral of W_key(r_i, .) P_psi(.) dq for every field key, [key * n + i].
  std::vector<double> field_integrals(const ProbabilityField& p) const;

  // Writes dP/dt into out (same layout as p.values); returns the largest
  // per-node total outflow rate.
  double rhs(const ProbabilityField& p, std::span<double> out) const;
  std::vector<double> rhs(const ProbabilityField& p) const;
  std::vector<double> rhs_reference(const ProbabilityField& p) const;

  // Entry (i, k) of the folded quadrature matrix for kernel index `kernel`.
  double matrix(std::size_t kernel, std::size_t i, std::size_t k) const;

 private:
  double folded_kernel(const Kernel& w, Location x, Location y) const;

  ModelSpec model_;
  Grid grid_;
  std::vector<std::size_t> key_matrix_;        // field key -> matrix slot
  std::vector<std::size_t> kernel_slot_;       // kernel index -> matrix slot (npos if unused)
  std::vector<std::vector<double>> matrices_;  // n x n, row-major
};

std::vector<double> rhs(const ProbabilityField& p, const ModelSpec& model, const Grid& g);

struct IntegrateOptions {
  // Keep every Euler iterate (the mean-field rate schedule needs them).
  bool record_every_step = false;
  // Negative entries above this are clamped to zero (node renormalized);
  // anything below aborts.
  double negative_tolerance = 1e-8;
};

struct Solution {
  std::vector<ProbabilityField> snapshots;
  std::vector<ProbabilityField> steps;  // t = 0 and every iterate, if requested
  ProbabilityField final;
  std::size_t step_count = 0;
  std::size_t clamped_entries = 0;
  double max_mass_deviation = 0.0;  // max over steps and nodes of |sum_x P_x - 1|
};

// Forward Euler from init.t to t_end with step h (a shorter last step lands on
// t_end exactly). Each snapshot is taken at the step time nearest to it.
Solution integrate(const Solver& solver, ProbabilityField init, double h, double t_end,
                   std::span<const double> snapshot_times = {}, const IntegrateOptions& options = {});

Solution integrate(const ModelSpec& model, const Grid& g, ProbabilityField init, double h, double t_end,
                   std::span<const double> snapshot_times = {}, const IntegrateOptions& options = {});

}  // namespace vegdyn::gke
