#include "vegdyn/gke.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "vegdyn/errors.hpp"

namespace vegdyn::gke {

namespace {
constexpr auto kNone = std::numeric_limits<std::size_t>::max();
}

std::string to_string(Boundary b) {
  switch (b) {
    case Boundary::periodic: return "periodic";
    case Boundary::reflecting: return "reflecting";
    case Boundary::none: return "none";
  }
  return "none";
}

Boundary boundary_from_string(std::string_view s) {
  if (s == "periodic") return Boundary::periodic;
  if (s == "reflecting") return Boundary::reflecting;
  if (s == "none") return Boundary::none;
  throw InvalidInput("unknown boundary '" + std::string(s) + "'");
}

Boundary default_boundary(DomainKind kind) {
  switch (kind) {
    case DomainKind::ring: return Boundary::periodic;
    case DomainKind::interval: return Boundary::reflecting;
    case DomainKind::patches: return Boundary::none;
  }
  return Boundary::none;
}

Grid make_grid(const SiteMeasure& measure, std::size_t n_nodes, Boundary boundary) {
  Grid g;
  g.domain = measure.domain();
  g.boundary = boundary;
  const auto bad = [&] {
    return InvalidInput("boundary '" + to_string(boundary) + "' is not available on a " +
                        to_string(g.domain.kind) + " domain");
  };
  switch (g.domain.kind) {
    case DomainKind::patches: {
      if (boundary != Boundary::none) throw bad();
      g.weights = measure.weights();
      g.nodes.resize(g.weights.size());
      std::iota(g.nodes.begin(), g.nodes.end(), 0.0);
      return g;
    }
    case DomainKind::ring: {
      if (boundary != Boundary::periodic) throw bad();
      if (n_nodes < 3) throw InvalidInput("a continuum grid needs at least 3 nodes");
      const double dx = g.domain.length / static_cast<double>(n_nodes);
      for (std::size_t k = 0; k < n_nodes; ++k) {
        g.nodes.push_back(static_cast<double>(k) * dx);
        g.weights.push_back(measure.density(g.nodes.back()) * dx);
      }
      break;
    }
    case DomainKind::interval: {
      if (boundary != Boundary::reflecting) throw bad();
      if (n_nodes < 3) throw InvalidInput("a continuum grid needs at least 3 nodes");
      const double dx = g.domain.length / static_cast<double>(n_nodes - 1);
      for (std::size_t k = 0; k < n_nodes; ++k) {
        const double x = k + 1 == n_nodes ? g.domain.length : static_cast<double>(k) * dx;
        const double half = (k == 0 || k + 1 == n_nodes) ? 0.5 : 1.0;
        g.nodes.push_back(x);
        g.weights.push_back(half * dx * measure.density(x));
      }
      break;
    }
  }
  const double total = std::accumulate(g.weights.begin(), g.weights.end(), 0.0);
  if (!(total > 0.0)) throw InvalidInput("site measure has no mass on the grid");
  for (auto& w : g.weights) w /= total;
  return g;
}

double quadrature(std::span<const double> f, const Grid& g) {
  if (f.size() != g.size()) throw InvalidInput("quadrature: field and grid sizes differ");
  double acc = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) acc += g.weights[k] * f[k];
  return acc;
}

std::vector<double> ProbabilityField::component(StateIndex s) const {
  std::vector<double> out(nodes());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = at(i, s);
  return out;
}

ProbabilityField initial_field(const ModelSpec& model, const Grid& g) {
  ProbabilityField p;
  p.states = model.state_count();
  p.values.reserve(g.size() * p.states);
  for (auto x : g.nodes) {
    const auto probs = model.initial_law().at(x);
    p.values.insert(p.values.end(), probs.begin(), probs.end());
  }
  return p;
}

// ---------------------------------------------------------------------------

double Solver::folded_kernel(const Kernel& w, Location x, Location y) const {
  if (grid_.boundary != Boundary::reflecting || !w.is_gaussian()) return w(x, y);
  // even reflection about 0 and L, then 2L-periodic extension
  const double l2 = 2.0 * grid_.domain.length;
  double acc = 0.0;
  for (int m = -1; m <= 1; ++m) {
    acc += w.at_distance(std::abs(x - y - m * l2));
    acc += w.at_distance(std::abs(x + y - m * l2));
  }
  return acc;
}

Solver::Solver(const ModelSpec& model, const Grid& grid) : model_(model), grid_(grid) {
  if (!(model.domain() == grid.domain)) throw InvalidInput("grid and model domains differ");
  const std::size_t n = grid_.size();
  kernel_slot_.assign(model_.kernels().size(), kNone);
  for (const auto& key : model_.field_keys()) {
    if (kernel_slot_[key.kernel] != kNone) continue;
    kernel_slot_[key.kernel] = matrices_.size();
    const Kernel& w = model_.kernels()[key.kernel].kernel;
    std::vector<double> a(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k)
        a[i * n + k] = folded_kernel(w, grid_.nodes[i], grid_.nodes[k]) * grid_.weights[k];
    matrices_.push_back(std::move(a));
  }
  for (const auto& key : model_.field_keys()) key_matrix_.push_back(kernel_slot_[key.kernel]);
}

double Solver::matrix(std::size_t kernel, std::size_t i, std::size_t k) const {
  const std::size_t slot = kernel_slot_.at(kernel);
  if (slot == kNone) throw InvalidInput("kernel is not used by any transition");
  return matrices_[slot].at(i * grid_.size() + k);
}

std::vector<double> Solver::field_integrals(const ProbabilityField& p) const {
  const std::size_t n = grid_.size();
  const std::size_t k = model_.state_count();
  if (p.states != k || p.values.size() != n * k) throw InvalidInput("field does not match the grid");
  const auto& keys = model_.field_keys();
  std::vector<double> out(keys.size() * n, 0.0);
  for (std::size_t q = 0; q < keys.size(); ++q) {
    const double* a = matrices_[key_matrix_[q]].data();
    const StateIndex psi = keys[q].depends_on;
    double* dst = out.data() + q * n;
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      const double* row = a + i * n;
      for (std::size_t j = 0; j < n; ++j) acc += row[j] * p.values[j * k + psi];
      dst[i] = acc;
    }
  }
  return out;
}

double Solver::rhs(const ProbabilityField& p, std::span<double> out) const {
  const std::size_t n = grid_.size();
  const std::size_t k = model_.state_count();
  if (out.size() != n * k) throw InvalidInput("rhs output has the wrong size");
  const auto integrals = field_integrals(p);
  const auto& trans = model_.transitions();
  double max_out = 0.0;
#pragma omp parallel for schedule(static) reduction(max : max_out)
  for (std::size_t i = 0; i < n; ++i) {
    double* d = out.data() + i * k;
    std::fill(d, d + k, 0.0);
    for (StateIndex x = 0; x < k; ++x) {
      double total = 0.0;
      for (auto t : model_.outgoing(x)) {
        const auto key = model_.field_of(t);
        const double rate = trans[t].rate(key ? integrals[*key * n + i] : 0.0);
        const double flow = rate * p.values[i * k + x];
        d[x] -= flow;
        d[trans[t].to] += flow;
        total += rate;
      }
      max_out = std::max(max_out, total);
    }
  }
  return max_out;
}

std::vector<double> Solver::rhs(const ProbabilityField& p) const {
  std::vector<double> out(p.values.size());
  rhs(p, out);
  return out;
}

std::vector<double> Solver::rhs_reference(const ProbabilityField& p) const {
  const std::size_t n = grid_.size();
  const std::size_t k = model_.state_count();
  if (p.states != k || p.values.size() != n * k) throw InvalidInput("field does not match the grid");
  const auto& trans = model_.transitions();
  const auto rate_at = [&](const TransitionSpec& tr, std::size_t i) {
    if (!tr.kernel || !tr.depends_on) return tr.rate(0.0);
    const Kernel& w = model_.kernels()[*tr.kernel].kernel;
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      acc += folded_kernel(w, grid_.nodes[i], grid_.nodes[j]) * p.at(j, *tr.depends_on) * grid_.weights[j];
    return tr.rate(acc);
  };
  std::vector<double> out(n * k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (StateIndex x = 0; x < k; ++x) {
      double gain = 0.0, loss = 0.0;
      for (const auto& tr : trans) {
        if (tr.to == x) gain += rate_at(tr, i) * p.at(i, tr.from);
        if (tr.from == x) loss += rate_at(tr, i) * p.at(i, x);
      }
      out[i * k + x] = gain - loss;
    }
  }
  return out;
}

std::vector<double> rhs(const ProbabilityField& p, const ModelSpec& model, const Grid& g) {
  return Solver(model, g).rhs(p);
}

// ---------------------------------------------------------------------------

namespace {

// Clamps tiny negative entries and renormalizes the affected node; returns the
// number of clamped entries.
std::size_t enforce_positivity(ProbabilityField& p, double tolerance, double t) {
  std::size_t clamped = 0;
  const std::size_t k = p.states;
  for (std::size_t i = 0; i < p.nodes(); ++i) {
    bool touched = false;
    for (std::size_t s = 0; s < k; ++s) {
      double& v = p.values[i * k + s];
      if (!std::isfinite(v)) {
        std::ostringstream os;
        os << "non-finite probability at node " << i << ", t=" << t;
        throw NumericAbort(os.str());
      }
      if (v >= 0.0) continue;
      if (v < -tolerance) {
        std::ostringstream os;
        os << "probability " << v << " at node " << i << ", t=" << t
           << " is below -" << tolerance << "; reduce the time step";
        throw NumericAbort(os.str());
      }
      v = 0.0;
      touched = true;
      ++clamped;
    }
    if (touched) {
      double total = 0.0;
      for (std::size_t s = 0; s < k; ++s) total += p.values[i * k + s];
      for (std::size_t s = 0; s < k; ++s) p.values[i * k + s] /= total;
    }
  }
  return clamped;
}

double mass_deviation(const ProbabilityField& p) {
  double worst = 0.0;
  const std::size_t k = p.states;
  for (std::size_t i = 0; i < p.nodes(); ++i) {
    double total = 0.0;
    for (std::size_t s = 0; s < k; ++s) total += p.values[i * k + s];
    worst = std::max(worst, std::abs(total - 1.0));
  }
  return worst;
}

}  // namespace

Solution integrate(const Solver& solver, ProbabilityField init, double h, double t_end,
                   std::span<const double> snapshot_times, const IntegrateOptions& options) {
  if (!(h > 0.0) || !std::isfinite(h)) throw InvalidInput("time step must be positive");
  if (!std::isfinite(t_end) || t_end < init.t) throw InvalidInput("t_end precedes the initial time");
  if (init.states != solver.model().state_count() || init.nodes() != solver.grid().size())
    throw InvalidInput("initial field does not match the grid");
  for (std::size_t k = 1; k < snapshot_times.size(); ++k)
    if (snapshot_times[k] < snapshot_times[k - 1]) throw InvalidInput("snapshot times must be sorted");

  Solution sol;
  ProbabilityField p = std::move(init);
  const double t0 = p.t;
  sol.max_mass_deviation = mass_deviation(p);
  if (options.record_every_step) sol.steps.push_back(p);

  std::size_t next = 0;
  const auto take_snapshots = [&](bool last) {
    // nearest step time: compare with the midpoint to the next (possibly short) step
    const double mid = 0.5 * (p.t + std::min(p.t + h, t_end));
    while (next < snapshot_times.size() && (last || snapshot_times[next] <= mid)) {
      sol.snapshots.push_back(p);
      ++next;
    }
  };
  take_snapshots(t_end == t0);

  std::vector<double> d(p.values.size());
  const double span = t_end - t0;
  const auto full = static_cast<std::size_t>(std::floor(span / h * (1.0 + 1e-12)));
  const double remainder = span - static_cast<double>(full) * h;
  const std::size_t total = full + (remainder > 1e-9 * h ? 1 : 0);
  for (std::size_t step = 1; step <= total; ++step) {
    const double dt = step <= full ? h : remainder;
    const double max_out = solver.rhs(p, d);
    if (!(dt * max_out < 1.0)) {
      std::ostringstream os;
      os << "explicit Euler step h=" << dt << " times outflow rate " << max_out
         << " is not below 1 at t=" << p.t << "; use h < " << 1.0 / max_out;
      throw NumericAbort(os.str());
    }
    for (std::size_t j = 0; j < d.size(); ++j) p.values[j] += dt * d[j];
    p.t = step <= full ? t0 + static_cast<double>(step) * h : t_end;
    sol.clamped_entries += enforce_positivity(p, options.negative_tolerance, p.t);
    sol.max_mass_deviation = std::max(sol.max_mass_deviation, mass_deviation(p));
    if (options.record_every_step) sol.steps.push_back(p);
    take_snapshots(step == total);
  }
  take_snapshots(true);
  sol.step_count = total;
  sol.final = std::move(p);
  return sol;
}

Solution integrate(const ModelSpec& model, const Grid& g, ProbabilityField init, double h, double t_end,
                   std::span<const double> snapshot_times, const IntegrateOptions& options) {
  return integrate(Solver(model, g), std::move(init), h, t_end, snapshot_times, options);
}

}  // namespace vegdyn::gke
