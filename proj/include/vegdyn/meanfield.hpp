#pragma once

// Single-site simulation of the mean-field limit process: its rates are the
// model rate functions applied to kernel integrals of a precomputed GKE
// solution, so a site is a time-inhomogeneous Markov chain sampled by thinning.

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "vegdyn/gke.hpp"
#include "vegdyn/model.hpp"
#include "vegdyn/rng.hpp"

namespace vegdyn::meanfield {

enum class TimeInterpolation { linear, step };

class RateSchedule {
 public:
  // Schedule from consecutive GKE iterates (at least one; one means a
  // stationary schedule valid for all t >= its time).
  RateSchedule(const gke::Solver& solver, std::span<const gke::ProbabilityField> steps,
               TimeInterpolation interpolation = TimeInterpolation::linear);

  // Schedule from raw field-key integrals: values[step][key * nodes + node].
  RateSchedule(ModelSpec model, gke::Grid grid, std::vector<double> times,
               std::vector<std::vector<double>> values, std::vector<double> initial,
               TimeInterpolation interpolation = TimeInterpolation::linear);

  const ModelSpec& model() const { return model_; }
  const gke::Grid& grid() const { return grid_; }
  double t_begin() const { return times_.front(); }
  double t_end() const;

  std::size_t node_of(Location r) const;
  // Law at t_begin at the node nearest r.
  std::span<const double> initial(Location r) const;

  // Lambda_{x,y}(t) for every transition out of x with a nonzero rate.
  std::vector<std::pair<StateIndex, double>> lambda_rates(double t, Location r, StateIndex x) const;
  double lambda(std::size_t transition, double t, std::size_t node) const;
  double field(std::size_t key, double t, std::size_t node) const;
  // Thinning bound for state x (the model's stored sup bound).
  double bound(StateIndex x) const { return model_.outgoing_bound(x); }

 private:
  void check() const;

  ModelSpec model_;
  gke::Grid grid_;
  TimeInterpolation interpolation_;
  std::vector<double> times_;
  std::vector<std::vector<double>> values_;
  std::vector<double> initial_;  // [node * K + state]
};

struct SiteTrajectory {
  double t_start = 0.0;
  double t_end = 0.0;
  StateIndex initial = 0;
  std::vector<std::pair<double, StateIndex>> jumps;  // (time, new state)
  std::size_t proposals = 0;

  StateIndex state_at(double t) const;
};

SiteTrajectory simulate_site(const RateSchedule& s, Location r, StateIndex init, double t_end, Rng& rng);
SiteTrajectory simulate_site(const RateSchedule& s, Location r, StateIndex init, double t_end,
                             std::uint64_t seed);

struct Occupancy {
  std::vector<double> times;
  std::size_t state_count = 0;
  std::size_t replicas = 0;
  std::vector<double> frequency;  // [time * K + state]
  std::vector<double> stderr_;    // binomial standard error, same layout

  double freq(std::size_t time, StateIndex s) const { return frequency[time * state_count + s]; }
  double se(std::size_t time, StateIndex s) const { return stderr_[time * state_count + s]; }
};

// Replica k starts from a state drawn from the schedule's initial law at r
// and uses stream (seed, k); counts are reduced in a fixed order.
Occupancy ensemble_occupancy(const RateSchedule& s, Location r, std::size_t n_replicas,
                             std::span<const double> times, std::uint64_t seed);

}  // namespace vegdyn::meanfield
