#include "vegdyn/meanfield.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>

#include "vegdyn/errors.hpp"

namespace vegdyn::meanfield {

RateSchedule::RateSchedule(const gke::Solver& solver, std::span<const gke::ProbabilityField> steps,
                           TimeInterpolation interpolation)
    : model_(solver.model()), grid_(solver.grid()), interpolation_(interpolation) {
  if (steps.empty()) throw InvalidInput("a rate schedule needs at least one field");
  for (const auto& p : steps) {
    times_.push_back(p.t);
    values_.push_back(solver.field_integrals(p));
  }
  initial_ = steps.front().values;
  check();
}

RateSchedule::RateSchedule(ModelSpec model, gke::Grid grid, std::vector<double> times,
                           std::vector<std::vector<double>> values, std::vector<double> initial,
                           TimeInterpolation interpolation)
    : model_(std::move(model)),
      grid_(std::move(grid)),
      interpolation_(interpolation),
      times_(std::move(times)),
      values_(std::move(values)),
      initial_(std::move(initial)) {
  check();
}

void RateSchedule::check() const {
  const std::size_t n = grid_.size();
  if (times_.empty() || times_.size() != values_.size()) throw InvalidInput("schedule times and values differ");
  for (std::size_t k = 1; k < times_.size(); ++k)
    if (!(times_[k] > times_[k - 1])) throw InvalidInput("schedule times must increase");
  for (const auto& v : values_)
    if (v.size() != model_.field_keys().size() * n) throw InvalidInput("schedule values have the wrong size");
  if (initial_.size() != n * model_.state_count()) throw InvalidInput("schedule initial law has the wrong size");
}

double RateSchedule::t_end() const {
  return times_.size() == 1 ? std::numeric_limits<double>::infinity() : times_.back();
}

std::size_t RateSchedule::node_of(Location r) const {
  const auto& nodes = grid_.nodes;
  if (grid_.domain.kind == DomainKind::patches) {
    const auto k = std::llround(r);
    if (k < 0 || static_cast<std::size_t>(k) >= nodes.size()) throw InvalidInput("patch index out of range");
    return static_cast<std::size_t>(k);
  }
  if (grid_.domain.kind == DomainKind::ring) {
    const double len = grid_.domain.length;
    const double dx = len / static_cast<double>(nodes.size());
    double x = std::fmod(r, len);
    if (x < 0) x += len;
    return static_cast<std::size_t>(std::llround(x / dx)) % nodes.size();
  }
  auto it = std::lower_bound(nodes.begin(), nodes.end(), r);
  if (it == nodes.begin()) return 0;
  if (it == nodes.end()) return nodes.size() - 1;
  const auto hi = static_cast<std::size_t>(it - nodes.begin());
  return (r - nodes[hi - 1] <= nodes[hi] - r) ? hi - 1 : hi;
}

std::span<const double> RateSchedule::initial(Location r) const {
  const std::size_t k = model_.state_count();
  return std::span<const double>(initial_).subspan(node_of(r) * k, k);
}

double RateSchedule::field(std::size_t key, double t, std::size_t node) const {
  const std::size_t n = grid_.size();
  const double tol = 1e-9 * std::max(1.0, std::abs(t));
  if (!(t >= times_.front() - tol) || (times_.size() > 1 && t > times_.back() + tol))
    throw InvalidInput("time outside the rate schedule");
  const std::size_t idx = key * n + node;
  if (times_.size() == 1 || t <= times_.front()) return values_.front()[idx];
  if (t >= times_.back()) return values_.back()[idx];
  const auto it = std::upper_bound(times_.begin(), times_.end(), t);
  const auto hi = static_cast<std::size_t>(it - times_.begin());
  const auto lo = hi - 1;
  if (interpolation_ == TimeInterpolation::step) return values_[lo][idx];
  const double w = (t - times_[lo]) / (times_[hi] - times_[lo]);
  return (1.0 - w) * values_[lo][idx] + w * values_[hi][idx];
}

double RateSchedule::lambda(std::size_t transition, double t, std::size_t node) const {
  const auto& tr = model_.transitions().at(transition);
  const auto key = model_.field_of(transition);
  return tr.rate(key ? field(*key, t, node) : 0.0);
}

std::vector<std::pair<StateIndex, double>> RateSchedule::lambda_rates(double t, Location r, StateIndex x) const {
  if (x >= model_.state_count()) throw InvalidInput("state out of range");
  const std::size_t node = node_of(r);
  std::vector<std::pair<StateIndex, double>> out;
  for (auto t_idx : model_.outgoing(x)) {
    const double v = lambda(t_idx, t, node);
    if (v > 0.0) out.emplace_back(model_.transitions()[t_idx].to, v);
  }
  return out;
}

StateIndex SiteTrajectory::state_at(double t) const {
  StateIndex s = initial;
  for (const auto& [tj, to] : jumps) {
    if (tj > t) break;
    s = to;
  }
  return s;
}

SiteTrajectory simulate_site(const RateSchedule& s, Location r, StateIndex init, double t_end, Rng& rng) {
  const auto& model = s.model();
  if (init >= model.state_count()) throw InvalidInput("initial state out of range");
  if (t_end > s.t_end() * (1.0 + 1e-12) + 1e-12) throw InvalidInput("t_end beyond the rate schedule");
  SiteTrajectory traj;
  traj.t_start = s.t_begin();
  traj.t_end = t_end;
  traj.initial = init;
  const std::size_t node = s.node_of(r);
  StateIndex x = init;
  double t = s.t_begin();
  while (true) {
    const double b = s.bound(x);
    if (!(b > 0.0)) break;
    t += -std::log(uniform_open0(rng)) / b;
    if (t > t_end) break;
    ++traj.proposals;
    double u = uniform01(rng) * b;
    for (auto idx : model.outgoing(x)) {
      const double v = s.lambda(idx, t, node);
      if (u < v) {
        x = model.transitions()[idx].to;
        traj.jumps.emplace_back(t, x);
        break;
      }
      u -= v;
    }
  }
  return traj;
}

SiteTrajectory simulate_site(const RateSchedule& s, Location r, StateIndex init, double t_end,
                             std::uint64_t seed) {
  Rng rng = make_stream(seed);
  return simulate_site(s, r, init, t_end, rng);
}

Occupancy ensemble_occupancy(const RateSchedule& s, Location r, std::size_t n_replicas,
                             std::span<const double> times, std::uint64_t seed) {
  if (n_replicas == 0) throw InvalidInput("need at least one replica");
  for (std::size_t k = 1; k < times.size(); ++k)
    if (times[k] < times[k - 1]) throw InvalidInput("times must be sorted");
  const std::size_t kstates = s.model().state_count();
  const double t_last = times.empty() ? s.t_begin() : times.back();
  const auto law = s.initial(r);

  std::vector<StateIndex> end_states(n_replicas * times.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 64)
  for (std::size_t rep = 0; rep < n_replicas; ++rep) {
    try {
      Rng rng = make_stream(seed, rep);
      const double u = uniform01(rng);
      StateIndex init = 0;
      double acc = 0.0;
      for (StateIndex x = 0; x < kstates; ++x) {
        if (law[x] <= 0.0) continue;
        init = x;
        acc += law[x];
        if (u < acc) break;
      }
      const auto traj = simulate_site(s, r, init, t_last, rng);
      for (std::size_t ti = 0; ti < times.size(); ++ti)
        end_states[rep * times.size() + ti] = traj.state_at(times[ti]);
    } catch (...) {
#pragma omp critical(vegdyn_meanfield_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  Occupancy out;
  out.times.assign(times.begin(), times.end());
  out.state_count = kstates;
  out.replicas = n_replicas;
  std::vector<std::size_t> counts(times.size() * kstates, 0);
  for (std::size_t rep = 0; rep < n_replicas; ++rep)
    for (std::size_t ti = 0; ti < times.size(); ++ti) ++counts[ti * kstates + end_states[rep * times.size() + ti]];
  const double n = static_cast<double>(n_replicas);
  for (auto c : counts) {
    const double p = static_cast<double>(c) / n;
    out.frequency.push_back(p);
    out.stderr_.push_back(std::sqrt(p * (1.0 - p) / n));
  }
  return out;
}

}  // namespace vegdyn::meanfield
