#pragma once

// Exact event-driven (Gillespie direct method) simulation of the N-site
// Markov jump process with kernel-weighted rates.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "vegdyn/model.hpp"
#include "vegdyn/rng.hpp"

namespace vegdyn::ssa {

struct Options {
  // Dense N x N kernel rows are stored only while they fit in this budget.
  std::size_t memory_budget_bytes = std::size_t{512} << 20;
  // Truncate Gaussian kernel rows beyond this many sigmas (sparse rows). The
  // truncated mass is not renormalized.
  std::optional<double> cutoff_sigmas;
  // Recompute caches and the rate tree from scratch this often.
  std::size_t refresh_interval = 100000;
  std::size_t max_events = 200'000'000;
  bool record_events = true;
};

struct Event {
  double t = 0.0;
  std::size_t site = 0;
  StateIndex from = 0;
  StateIndex to = 0;

  bool operator==(const Event&) const = default;
};

struct StepOutcome {
  enum class Kind { event, absorbed, horizon };
  Kind kind = Kind::absorbed;
  Event event;
};

class SiteSystem {
 public:
  SiteSystem(ModelSpec model, std::vector<Location> positions, std::vector<StateIndex> states, Rng rng,
             Options options = {});

  std::size_t size() const { return states_.size(); }
  const ModelSpec& model() const { return model_; }
  const std::vector<Location>& positions() const { return positions_; }
  const std::vector<StateIndex>& states() const { return states_; }
  double time() const { return time_; }
  std::size_t event_count() const { return event_count_; }
  std::size_t count(StateIndex s) const { return counts_[s]; }
  bool patch_mode() const { return patch_mode_; }
  Rng& rng() { return rng_; }

  // Cached (1/N) sum_j W(r_site, r_j) 1{X_j = psi} for field key `key`.
  double field(std::size_t key, std::size_t site) const;
  // The same quantity for every site, evaluated from scratch.
  std::vector<double> recompute_field(std::size_t key) const;
  // Largest relative discrepancy between cached and recomputed fields.
  double max_field_error() const;

  // Nonzero rates out of the site's current state.
  std::vector<std::pair<StateIndex, double>> transition_rates(std::size_t site) const;
  double total_rate() const;

  // Draws the next event; if it would occur after `horizon`, advances the
  // clock to the horizon and applies nothing.
  StepOutcome step(double horizon = std::numeric_limits<double>::infinity());

  // Flips one site without advancing time; keeps every cache consistent.
  void set_state(std::size_t site, StateIndex to);

  // Rebuilds all caches from the current configuration.
  void refresh();

 private:
  void build_rows();
  void recompute_patch_rates();
  double site_total_rate(std::size_t site) const;
  double patch_field(std::size_t key, std::size_t patch) const;
  double kernel_weight(std::size_t key, std::size_t i, std::size_t j) const;
  void update_site_rate(std::size_t site);
  void rebuild_tree();
  std::size_t find_site(double target) const;

  ModelSpec model_;
  Options options_;
  std::vector<Location> positions_;
  std::vector<StateIndex> states_;
  Rng rng_;
  double time_ = 0.0;
  std::size_t event_count_ = 0;
  std::size_t since_refresh_ = 0;
  std::vector<std::size_t> counts_;
  bool patch_mode_ = false;

  // Patch mode: sites grouped by (patch, state); rates shared within a group.
  std::size_t patches_ = 0;
  std::vector<std::size_t> patch_of_;
  std::vector<std::vector<std::size_t>> members_;  // [patch * K + state]
  std::vector<std::size_t> slot_;
  std::vector<double> patch_fields_;   // [key * M + patch]
  std::vector<double> group_rate_;     // per-site total rate of group [patch * K + state]
  double patch_total_ = 0.0;

  // Continuum mode: per-site fields, kernel rows, Fenwick tree of site rates.
  std::vector<std::vector<double>> fields_;  // [key][site]
  std::vector<std::size_t> key_shape_;       // key -> index into shapes_
  std::vector<Kernel> shapes_;               // unit-amplitude kernel shapes
  std::vector<double> key_amplitude_;
  enum class RowMode { dense, sparse, on_demand, constant };
  std::vector<RowMode> row_mode_;
  std::vector<std::vector<double>> dense_;   // [shape] N*N
  std::vector<std::vector<std::size_t>> sparse_offsets_;
  std::vector<std::vector<std::uint32_t>> sparse_index_;
  std::vector<std::vector<double>> sparse_weight_;
  std::vector<double> site_rate_;
  std::vector<double> tree_;
  std::size_t nonzero_sites_ = 0;
  std::vector<std::uint32_t> touched_;
  std::uint32_t touch_stamp_ = 0;
  std::vector<std::size_t> touched_list_;
};

// Positions from the model's measure, states drawn from the initial law;
// replica `stream` of a seed gives an independent reproducible system.
SiteSystem init_state(const ModelSpec& model, std::size_t n, std::uint64_t seed,
                      std::uint64_t stream = 0, const Options& options = {});

std::vector<std::pair<StateIndex, double>> transition_rates(const SiteSystem& sys, std::size_t site);

StepOutcome step(SiteSystem& sys);

struct Snapshot {
  double t = 0.0;
  std::vector<StateIndex> states;
};

struct Trajectory {
  std::size_t state_count = 0;
  std::vector<Location> positions;
  std::vector<StateIndex> initial_states;
  std::vector<StateIndex> final_states;
  std::vector<Event> events;  // empty when events were not recorded
  bool events_recorded = true;
  std::size_t event_count = 0;
  double t_start = 0.0;
  double t_end = 0.0;
  bool absorbed = false;
  double absorption_time = std::numeric_limits<double>::infinity();
};

struct Result {
  Trajectory trajectory;
  std::vector<Snapshot> snapshots;
};

// Advances `sys` to t_end (or absorption), recording snapshots at the given
// sorted times; state at time s includes every event with t <= s.
Result run(SiteSystem& sys, double t_end, std::span<const double> snapshot_times = {},
           const Options& options = {});

Result simulate(const ModelSpec& model, std::size_t n, double t_end, std::uint64_t seed,
                std::span<const double> snapshot_times = {}, const Options& options = {},
                std::uint64_t stream = 0);

struct OccupancySeries {
  std::vector<double> times;
  std::vector<double> bin_edges;  // empty: one bin spanning everything
  std::size_t state_count = 0;
  std::vector<std::size_t> bin_counts;
  std::vector<double> fractions;  // [(time * bins + bin) * K + state]; NaN for empty bins

  std::size_t bins() const { return bin_edges.empty() ? 1 : bin_edges.size() - 1; }
  double at(std::size_t time, std::size_t bin, StateIndex s) const {
    return fractions[(time * bins() + bin) * state_count + s];
  }
};

// Fractions of sites in each state at the given times (replaying the event
// log), optionally per spatial bin [edge_k, edge_{k+1}).
OccupancySeries occupancy(const Trajectory& traj, std::span<const double> times,
                          std::span<const double> bin_edges = {});

// Fractions of sites in each state within one configuration.
std::vector<double> state_fractions(std::span<const StateIndex> states, std::size_t state_count);

}  // namespace vegdyn::ssa
