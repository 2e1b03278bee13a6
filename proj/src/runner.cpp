#include "vegdyn/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "vegdyn/analysis.hpp"
#include "vegdyn/csv.hpp"
#include "vegdyn/errors.hpp"
#include "vegdyn/gke.hpp"
#include "vegdyn/meanfield.hpp"
#include "vegdyn/qsd.hpp"
#include "vegdyn/ssa.hpp"

#ifndef VEGDYN_VERSION
#define VEGDYN_VERSION "0.0.0"
#endif

namespace vegdyn::runner {

namespace fs = std::filesystem;
using nlohmann::json;
using config::ExperimentConfig;

std::string version() { return VEGDYN_VERSION; }

const std::vector<std::string>& task_names() {
  static const std::vector<std::string> names{"simulate", "gke",  "meanfield", "qsd",
                                              "equilibria", "converge", "chaos", "fronts"};
  return names;
}

const std::vector<std::string>& recipe_names() {
  static const std::vector<std::string> names{"fig2", "fig3", "fig4", "fig5_waves", "fig5_pinning"};
  return names;
}

bool is_task(std::string_view name) {
  const auto& t = task_names();
  return std::find(t.begin(), t.end(), name) != t.end();
}

bool is_recipe(std::string_view name) {
  const auto& r = recipe_names();
  return std::find(r.begin(), r.end(), name) != r.end();
}

json recipe_defaults(std::string_view name) {
  if (name == "fig2")
    // full size: N = 3000, 20 runs per Jbar
    return json::parse(R"({
      "model": {"family": "gf"},
      "domain": {"type": "patches", "M": 1},
      "kernels": {"jbar": 0.7},
      "sim": {"N": 1000, "t_end": 100, "seed": 1, "replicas": 10, "record_events": false},
      "analysis": {"jbar_grid": {"from": 0.0, "to": 2.0, "step": 0.002},
                   "jbar_values": [0.3, 0.7, 1.1, 1.3],
                   "initial_fractions": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]}
    })");
  if (name == "fig3")
    return json::parse(R"({
      "model": {"family": "gf"},
      "domain": {"type": "patches", "M": 1},
      "analysis": {"N_list": [250, 500, 1000], "jbar_grid": {"from": 0.2, "to": 1.0, "step": 0.01},
                   "time_scale": "printed"}
    })");
  if (name == "fig4")
    // full size: N = 3000
    return json::parse(R"({
      "model": {"family": "gstf"},
      "domain": {"type": "patches", "M": 1},
      "kernels": {"jbar": 0.25, "beta": 0.4},
      "sim": {"N": 3000, "t_end": 500, "seed": 1, "replicas": 1, "snapshot_every": 0.5, "record_events": false},
      "gke": {"h": 0.01, "snapshot_every": 0.1},
      "analysis": {"state": "G", "t_from": 100, "hysteresis": 0.05}
    })");
  if (name == "fig5_waves")
    // full size: N = 3000
    return json::parse(R"({
      "model": {"family": "gf",
                "initial": {"background": {"G": 1, "F": 0}, "blocks": [{"lo": 1, "hi": 2.5, "probs": {"G": 0, "F": 1}}]}},
      "domain": {"type": "ring", "L": 5},
      "kernels": {"sigma": 0.05},
      "sim": {"N": 1000, "t_end": 500, "seed": 1, "replicas": 1, "snapshot_every": 5, "record_events": false},
      "gke": {"h": 0.01, "nodes": 200, "snapshot_every": 5},
      "analysis": {"jbar_values": [0.5, 0.9, 1.25], "state": "F", "bin_width": 0.05}
    })");
  if (name == "fig5_pinning")
    // full size: N = 2000
    return json::parse(R"({
      "model": {"family": "gf", "initial": {"background": {"G": 0.5, "F": 0.5}}},
      "domain": {"type": "interval", "L": 1, "measure": {"kind": "trapezoid", "a": 0.4, "b": 1.2}},
      "kernels": {"sigma": 0.02, "jbar": 1.1},
      "sim": {"N": 2000, "t_end": 500, "seed": 1, "replicas": 1, "snapshot_every": 5, "record_events": false},
      "gke": {"h": 0.01, "nodes": 200, "boundary": "reflecting", "snapshot_every": 5},
      "analysis": {"state": "F", "t_from": 400, "t_to": 500, "with_ssa": true, "bin_width": 0.025}
    })");
  throw InvalidInput("unknown recipe '" + std::string(name) + "'");
}

namespace {

// Sections each task reads; they must appear in the configuration.
std::vector<std::string> required_sections(std::string_view task) {
  if (task == "simulate" || task == "converge" || task == "chaos") return {"model", "domain", "sim"};
  if (task == "gke" || task == "fronts") return {"model", "domain", "gke"};
  if (task == "meanfield") return {"model", "domain", "sim", "gke"};
  if (task == "qsd" || task == "equilibria") return {"model", "analysis"};
  return {};
}

// ---------------------------------------------------------------------------
// shared helpers

std::size_t replica_count(const ExperimentConfig& c) {
  return c.analysis.replicas ? c.analysis.replicas : c.sim.replicas;
}

ssa::Options ssa_options(const config::SimSection& s) {
  ssa::Options o;
  o.cutoff_sigmas = s.cutoff_sigmas;
  o.max_events = s.max_events;
  o.record_events = s.record_events;
  o.memory_budget_bytes = s.memory_budget_mb << 20;
  return o;
}

std::vector<double> sim_times(const ExperimentConfig& c) {
  return config::snapshot_grid(c.sim.snapshot_times, c.sim.snapshot_every, c.sim.t_end);
}

double gke_t_end(const ExperimentConfig& c) { return c.gke.t_end >= 0 ? c.gke.t_end : c.sim.t_end; }

std::vector<double> gke_times(const ExperimentConfig& c) {
  auto t = config::snapshot_grid(c.gke.snapshot_times, c.gke.snapshot_every, gke_t_end(c));
  if (t.empty()) t = {0.0, gke_t_end(c)};
  return t;
}

gke::Grid grid_for(const ModelSpec& m, const ExperimentConfig& c) {
  return gke::make_grid(m.measure(), c.gke.nodes, c.gke.boundary.value_or(gke::default_boundary(m.domain().kind)));
}

std::string tag(double v) { return csv::format(v); }

std::vector<std::string> state_header(const StateSet& s, const std::string& prefix) {
  std::vector<std::string> h;
  for (const auto& l : s.labels()) h.push_back(prefix + l);
  return h;
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::vector<double> masses(const gke::ProbabilityField& p, const gke::Grid& g) {
  std::vector<double> m(p.states);
  for (std::size_t s = 0; s < p.states; ++s) m[s] = gke::quadrature(p.component(s), g);
  return m;
}

struct GkeRun {
  std::vector<gke::ProbabilityField> snapshots;
  gke::ProbabilityField final;
  std::size_t steps = 0;
  std::size_t clamped = 0;
  double max_mass_deviation = 0.0;
};

// Integrates snapshot to snapshot, streaming rows so that an abort leaves
// <name>.partial files with everything computed so far.
GkeRun run_gke(const gke::Solver& solver, double h, double t_end, const std::vector<double>& times,
               const fs::path& fields_path, const fs::path& mass_path) {
  const ModelSpec& m = solver.model();
  const gke::Grid& g = solver.grid();
  csv::Writer fields(fields_path, concat({"t", "node", "pos"}, state_header(m.states(), "P_")));
  csv::Writer mass(mass_path, concat({"t"}, state_header(m.states(), "mass_")));
  GkeRun run;
  auto emit = [&](const gke::ProbabilityField& p) {
    for (std::size_t i = 0; i < p.nodes(); ++i) {
      fields << p.t << i << g.nodes[i];
      for (std::size_t s = 0; s < p.states; ++s) fields << p.at(i, s);
      fields.end_row();
    }
    mass << p.t;
    for (double x : masses(p, g)) mass << x;
    mass.end_row();
    run.snapshots.push_back(p);
  };
  gke::ProbabilityField p = gke::initial_field(m, g);
  auto advance = [&](double to) {
    if (to <= p.t) return;
    gke::Solution sol = gke::integrate(solver, p, h, to);
    run.steps += sol.step_count;
    run.clamped += sol.clamped_entries;
    run.max_mass_deviation = std::max(run.max_mass_deviation, sol.max_mass_deviation);
    p = std::move(sol.final);
  };
  // chunks end on the Euler grid; a snapshot is the step time nearest to it
  const double t0 = p.t;
  for (double t : times) {
    if (t > t_end) break;
    advance(std::min(t0 + std::round((t - t0) / h) * h, t_end));
    emit(p);
  }
  advance(t_end);
  run.final = p;
  fields.commit();
  mass.commit();
  return run;
}

json gke_summary(const GkeRun& r) {
  return {{"steps", r.steps}, {"clamped_entries", r.clamped}, {"max_mass_deviation", r.max_mass_deviation}};
}

// Fraction of sites in each state per spatial bin; NaN for empty bins.
std::vector<double> binned_fractions(const std::vector<Location>& pos, const std::vector<StateIndex>& states,
                                     std::size_t k, const std::vector<double>& edges, std::vector<std::size_t>& counts) {
  const std::size_t bins = edges.size() - 1;
  std::vector<double> f(bins * k, 0.0);
  counts.assign(bins, 0);
  for (std::size_t i = 0; i < pos.size(); ++i) {
    auto it = std::upper_bound(edges.begin(), edges.end(), pos[i]);
    std::size_t b = it == edges.begin() ? 0 : static_cast<std::size_t>(it - edges.begin()) - 1;
    b = std::min(b, bins - 1);
    ++counts[b];
    f[b * k + states[i]] += 1.0;
  }
  for (std::size_t b = 0; b < bins; ++b)
    for (std::size_t s = 0; s < k; ++s)
      f[b * k + s] = counts[b] ? f[b * k + s] / static_cast<double>(counts[b]) : std::nan("");
  return f;
}

std::vector<double> bin_edges(const Domain& d, double width) {
  const auto bins = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(d.length / width)));
  std::vector<double> e(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) e[b] = d.length * static_cast<double>(b) / static_cast<double>(bins);
  return e;
}

// Runs an OpenMP loop body for i in [0, n), rethrowing the first exception.
template <class F>
void parallel_for(std::size_t n, F&& body) {
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (...) {
#pragma omp critical(vegdyn_runner_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// tasks

Artifacts task_simulate(const ExperimentConfig& c, const fs::path& out) {
  const ModelSpec m = build_model(c.model);
  const auto times = sim_times(c);
  Artifacts a;
  csv::Writer summary(out / "replicas.csv",
                      concat({"replica", "events", "t_end", "absorbed", "absorption_time"}, state_header(m.states(), "final_")));
  csv::Writer series(out / "occupancy.csv", concat({"replica", "t"}, state_header(m.states(), "frac_")));
  for (std::size_t r = 0; r < c.sim.replicas; ++r) {
    const auto res = ssa::simulate(m, c.sim.n, c.sim.t_end, c.sim.seed, times, ssa_options(c.sim), r);
    const auto& tr = res.trajectory;
    if (c.sim.record_events) {
      const std::string name = "events_r" + std::to_string(r) + ".csv";
      csv::write_events(out / name, tr, m.states());
      a.files.push_back(name);
    }
    if (!res.snapshots.empty()) {
      const std::string name = "snapshots_r" + std::to_string(r) + ".csv";
      csv::write_snapshots(out / name, res.snapshots, tr.positions, m.states());
      a.files.push_back(name);
    }
    for (const auto& s : res.snapshots) {
      series << r << s.t;
      for (double f : ssa::state_fractions(s.states, m.state_count())) series << f;
      series.end_row();
    }
    summary << r << tr.event_count << tr.t_end << (tr.absorbed ? 1 : 0) << tr.absorption_time;
    for (double f : ssa::state_fractions(tr.final_states, m.state_count())) summary << f;
    summary.end_row();
  }
  summary.commit();
  series.commit();
  a.files.push_back("replicas.csv");
  a.files.push_back("occupancy.csv");
  return a;
}

Artifacts task_gke(const ExperimentConfig& c, const fs::path& out) {
  const ModelSpec m = build_model(c.model);
  const gke::Solver solver(m, grid_for(m, c));
  const GkeRun r = run_gke(solver, c.gke.h, gke_t_end(c), gke_times(c), out / "fields.csv", out / "mass.csv");
  Artifacts a;
  a.files = {"fields.csv", "mass.csv"};
  a.summary = gke_summary(r);
  return a;
}

Artifacts task_meanfield(const ExperimentConfig& c, const fs::path& out) {
  const ModelSpec m = build_model(c.model);
  const gke::Solver solver(m, grid_for(m, c));
  const double t_end = c.sim.t_end;
  gke::IntegrateOptions opt;
  opt.record_every_step = true;
  const gke::Solution sol = gke::integrate(solver, gke::initial_field(m, solver.grid()), c.gke.h, t_end, {}, opt);
  const meanfield::RateSchedule sched(solver, sol.steps);

  std::vector<double> times = c.analysis.checkpoints.empty() ? sim_times(c) : c.analysis.checkpoints;
  if (times.empty())
    for (std::size_t k = 1; k <= 10; ++k) times.push_back(t_end * static_cast<double>(k) / 10.0);
  const std::size_t reps = replica_count(c);
  const double r = c.analysis.location;
  const auto occ = meanfield::ensemble_occupancy(sched, r, reps, times, c.sim.seed);
  csv::write_occupancy(out / "meanfield_occupancy.csv", occ, m.states());

  // driving GKE law at the same node and times (nearest Euler iterate)
  const std::size_t node = sched.node_of(r);
  csv::Writer ref(out / "gke_reference.csv", {"t", "state", "probability"});
  double max_z = 0.0;
  for (std::size_t t = 0; t < times.size(); ++t) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < sol.steps.size(); ++k)
      if (std::abs(sol.steps[k].t - times[t]) < std::abs(sol.steps[best].t - times[t])) best = k;
    for (std::size_t s = 0; s < m.state_count(); ++s) {
      const double p = sol.steps[best].at(node, s);
      ref << times[t] << m.states().label(s) << p;
      ref.end_row();
      const double se = std::sqrt(std::max(p * (1 - p), 1e-300) / static_cast<double>(reps));
      max_z = std::max(max_z, std::abs(occ.freq(t, s) - p) / se);
    }
  }
  ref.commit();
  Artifacts a;
  a.files = {"meanfield_occupancy.csv", "gke_reference.csv"};
  a.summary = {{"replicas", reps}, {"node", node}, {"max_standard_errors", max_z}};
  return a;
}

std::vector<double> jbar_grid_or(const ExperimentConfig& c, double from, double to, double step) {
  if (!c.analysis.jbar_grid.empty()) return c.analysis.jbar_grid;
  std::vector<double> g;
  const auto n = static_cast<std::size_t>(std::llround((to - from) / step));
  for (std::size_t i = 0; i <= n; ++i) g.push_back(from + static_cast<double>(i) * step);
  return g;
}

Artifacts task_qsd(const ExperimentConfig& c, const fs::path& out) {
  std::vector<std::size_t> ns = c.analysis.n_list.empty() ? std::vector<std::size_t>{c.sim.n} : c.analysis.n_list;
  const auto grid = jbar_grid_or(c, 0.2, 1.0, 0.01);
  const auto sweep = qsd::qsd_sweep(ns, grid, c.model.phi, qsd::time_scale_from_string(c.analysis.time_scale));
  csv::write_qsd_sweep(out / "qsd_sweep.csv", sweep);
  csv::write_qsd_vectors(out / "qsd_vectors.csv", sweep);
  Artifacts a;
  a.files = {"qsd_sweep.csv", "qsd_vectors.csv"};
  a.summary = {{"rows", sweep.rows.size()}, {"monotonicity_violations", sweep.monotonicity_violations.size()}};
  return a;
}

Artifacts task_equilibria(const ExperimentConfig& c, const fs::path& out) {
  const auto grid = jbar_grid_or(c, 0.0, 2.0, 0.002);
  const auto sweep = analysis::bifurcation_sweep(grid, c.model.phi);
  csv::write_branches(out / "branches.csv", sweep.branches);
  csv::Writer w(out / "bifurcations.csv", {"kind", "jbar", "grass"});
  json list = json::array();
  for (const auto& b : sweep.bifurcations) {
    const char* kind = b.kind == analysis::Bifurcation::Kind::saddle_node ? "saddle_node" : "transcritical";
    w << kind << b.jbar << b.grass;
    w.end_row();
    list.push_back({{"kind", kind}, {"jbar", b.jbar}, {"grass", b.grass}});
  }
  w.commit();
  Artifacts a;
  a.files = {"branches.csv", "bifurcations.csv"};
  a.summary = {{"bifurcations", list}};
  return a;
}

Artifacts task_converge(const ExperimentConfig& c, const fs::path& out) {
  const ModelSpec m = build_model(c.model);
  const std::vector<std::size_t> ns =
      c.analysis.n_list.empty() ? std::vector<std::size_t>{125, 500, 2000, 8000} : c.analysis.n_list;
  analysis::ConvergenceOptions o;
  o.replicas = replica_count(c);
  o.t_end = c.sim.t_end;
  o.seed = c.sim.seed;
  o.gke_step = c.analysis.gke_step;
  o.snapshot_times = c.sim.snapshot_times;
  o.exclude_absorbed = c.analysis.exclude_absorbed;
  const auto res = analysis::convergence_study(m, ns, o);

  csv::Writer rows(out / "convergence_rows.csv", {"N", "replica", "error", "absorbed"});
  for (const auto& r : res.rows) {
    rows << r.n << r.replica << r.error << (r.absorbed ? 1 : 0);
    rows.end_row();
  }
  rows.commit();
  csv::Writer agg(out / "convergence.csv", {"N", "mean_error", "stderr"});
  for (std::size_t i = 0; i < res.n_list.size(); ++i) {
    agg << res.n_list[i] << res.mean_error[i] << res.stderr_error[i];
    agg.end_row();
  }
  agg.commit();
  csv::Writer fit(out / "convergence_fit.csv", {"slope", "stderr", "ci_low", "ci_high"});
  fit << res.slope << res.slope_stderr << res.slope_ci_low << res.slope_ci_high;
  fit.end_row();
  fit.commit();
  Artifacts a;
  a.files = {"convergence_rows.csv", "convergence.csv", "convergence_fit.csv"};
  a.summary = {{"slope", res.slope}, {"slope_ci", {res.slope_ci_low, res.slope_ci_high}}};
  return a;
}

Artifacts task_chaos(const ExperimentConfig& c, const fs::path& out) {
  const ModelSpec m = build_model(c.model);
  analysis::CorrelationOptions o;
  o.site_pairs = c.analysis.site_pairs;
  o.replicas = replica_count(c);
  o.t = c.sim.t_end;
  o.seed = c.sim.seed;
  const auto r = analysis::pairwise_correlation(m, c.sim.n, o);
  csv::Writer w(out / "chaos.csv", {"statistic", "value"});
  auto row = [&](const std::string& k, double v) {
    w << k << v;
    w.end_row();
  };
  row("max_abs_pooled", r.max_abs_pooled);
  for (std::size_t s = 0; s < r.pooled.size(); ++s) row("pooled_" + m.states().label(s), r.pooled[s]);
  row("max_abs_pair", r.max_abs_pair);
  row("pairs_used", static_cast<double>(r.pairs_used));
  row("pairs_skipped", static_cast<double>(r.pairs_skipped));
  row("null_max_abs_pooled", r.null_max_abs_pooled);
  row("null_max_abs_pair", r.null_max_abs_pair);
  w.commit();
  Artifacts a;
  a.files = {"chaos.csv"};
  a.summary = {{"max_abs_pooled", r.max_abs_pooled}, {"max_abs_pair", r.max_abs_pair}};
  return a;
}

struct FrontSeries {
  std::vector<double> times;
  std::vector<double> positions;
  std::optional<bool> forest_on_right;
};

void add_front(FrontSeries& fs_, double t, std::span<const double> x, std::span<const double> forest, double threshold) {
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isnan(forest[i])) {
      xs.push_back(x[i]);
      ys.push_back(forest[i]);
    }
  const auto f = analysis::front_position(xs, ys, threshold);
  if (!f) return;
  if (!fs_.forest_on_right) fs_.forest_on_right = f->forest_on_right;
  if (*fs_.forest_on_right != f->forest_on_right) return;
  fs_.times.push_back(t);
  fs_.positions.push_back(f->position);
}

std::optional<double> front_speed(const FrontSeries& s, double t_from, double t_to) {
  std::vector<double> t, p;
  for (std::size_t i = 0; i < s.times.size(); ++i)
    if (s.times[i] >= t_from && s.times[i] <= t_to) {
      t.push_back(s.times[i]);
      p.push_back(s.positions[i]);
    }
  if (t.size() < 2 || !s.forest_on_right) return std::nullopt;
  return analysis::wave_speed(t, p, *s.forest_on_right);
}

void write_fronts(csv::Writer& w, const std::string& source, const FrontSeries& s) {
  for (std::size_t i = 0; i < s.times.size(); ++i) {
    w << source << s.times[i] << s.positions[i] << (s.forest_on_right.value_or(true) ? 1 : 0);
    w.end_row();
  }
}

// SSA snapshots binned in space; one CSV row per (t, bin).
FrontSeries ssa_space_time(const ModelSpec& m, const ExperimentConfig& c, std::uint64_t stream, const fs::path& path,
                           StateIndex forest, std::vector<double>* time_average = nullptr) {
  auto opts = ssa_options(c.sim);
  opts.record_events = false;
  const auto times = sim_times(c);
  const auto res = ssa::simulate(m, c.sim.n, c.sim.t_end, c.sim.seed, times, opts, stream);
  const auto edges = bin_edges(m.domain(), c.analysis.bin_width);
  const std::size_t k = m.state_count(), bins = edges.size() - 1;
  csv::Writer w(path, concat({"t", "bin_lo", "bin_hi", "sites"}, state_header(m.states(), "frac_")));
  FrontSeries fronts;
  std::vector<double> centers(bins);
  for (std::size_t b = 0; b < bins; ++b) centers[b] = 0.5 * (edges[b] + edges[b + 1]);
  std::size_t averaged = 0;
  if (time_average) time_average->assign(bins, 0.0);
  for (const auto& s : res.snapshots) {
    std::vector<std::size_t> counts;
    const auto f = binned_fractions(res.trajectory.positions, s.states, k, edges, counts);
    std::vector<double> forest_frac(bins);
    for (std::size_t b = 0; b < bins; ++b) {
      w << s.t << edges[b] << edges[b + 1] << counts[b];
      for (std::size_t x = 0; x < k; ++x) w << f[b * k + x];
      w.end_row();
      forest_frac[b] = f[b * k + forest];
    }
    add_front(fronts, s.t, centers, forest_frac, c.analysis.threshold);
    if (time_average && s.t >= c.analysis.t_from && s.t <= c.analysis.t_to) {
      for (std::size_t b = 0; b < bins; ++b) (*time_average)[b] += forest_frac[b];
      ++averaged;
    }
  }
  w.commit();
  if (time_average && averaged)
    for (double& v : *time_average) v /= static_cast<double>(averaged);
  return fronts;
}

Artifacts task_fronts(const ExperimentConfig& c, const fs::path& out, const std::string& suffix = "",
                      std::vector<double>* ssa_average = nullptr) {
  const ModelSpec m = build_model(c.model);
  const StateIndex forest = m.states().index_of(c.analysis.state);
  const gke::Solver solver(m, grid_for(m, c));
  const std::string fields = "fields" + suffix + ".csv", mass = "mass" + suffix + ".csv",
                    fronts_name = "fronts" + suffix + ".csv", speeds_name = "speeds" + suffix + ".csv";
  const GkeRun r = run_gke(solver, c.gke.h, gke_t_end(c), gke_times(c), out / fields, out / mass);
  Artifacts a;
  a.files = {fields, mass, fronts_name, speeds_name};

  FrontSeries g;
  for (const auto& p : r.snapshots) add_front(g, p.t, solver.grid().nodes, p.component(forest), c.analysis.threshold);
  csv::Writer fw(out / fronts_name, {"source", "t", "position", "forest_on_right"});
  csv::Writer sw(out / speeds_name, {"source", "speed"});
  write_fronts(fw, "gke", g);
  const auto gs = front_speed(g, c.analysis.t_from, c.analysis.t_to);
  sw << "gke" << gs.value_or(std::nan(""));
  sw.end_row();

  json ssa_speeds = json::array();
  if (c.analysis.with_ssa)
    for (std::size_t rep = 0; rep < replica_count(c); ++rep) {
      const std::string name = "ssa_space_time" + suffix + "_r" + std::to_string(rep) + ".csv";
      const std::string source = "ssa_r" + std::to_string(rep);
      const FrontSeries s = ssa_space_time(m, c, rep, out / name, forest, rep == 0 ? ssa_average : nullptr);
      a.files.push_back(name);
      write_fronts(fw, source, s);
      const auto sp = front_speed(s, c.analysis.t_from, c.analysis.t_to);
      sw << source << sp.value_or(std::nan(""));
      sw.end_row();
      ssa_speeds.push_back(sp ? json(*sp) : json(nullptr));
    }
  fw.commit();
  sw.commit();

  const auto final_mass = masses(r.final, solver.grid());
  a.summary = gke_summary(r);
  a.summary["final_mass"] = final_mass;
  a.summary["gke_speed"] = gs ? json(*gs) : json(nullptr);
  if (!g.positions.empty()) a.summary["gke_last_front"] = g.positions.back();
  if (c.analysis.with_ssa) a.summary["ssa_speeds"] = ssa_speeds;
  return a;
}

// ---------------------------------------------------------------------------
// recipes

Artifacts recipe_fig2(const ExperimentConfig& c, const fs::path& out) {
  Artifacts a = task_equilibria(c, out);
  std::vector<double> jbars = c.analysis.jbar_values.empty() ? std::vector<double>{c.model.jbar} : c.analysis.jbar_values;
  std::vector<double> fractions = c.analysis.initial_fractions;
  if (fractions.empty())
    for (int i = 1; i <= 9; ++i) fractions.push_back(0.1 * i);
  const std::size_t reps = c.sim.replicas;
  const std::size_t runs = jbars.size() * fractions.size() * reps;
  std::vector<double> final_grass(runs);
  std::vector<int> absorbed(runs);
  auto opts = ssa_options(c.sim);
  opts.record_events = false;
  parallel_for(runs, [&](std::size_t i) {
    const std::size_t j = i / (fractions.size() * reps), f = (i / reps) % fractions.size();
    ModelConfig mc = c.model;
    mc.jbar = jbars[j];
    mc.initial.background = {{"G", fractions[f]}, {"F", 1.0 - fractions[f]}};
    mc.initial.blocks.clear();
    mc.initial.per_patch.clear();
    const ModelSpec m = build_model(mc);
    const auto res = ssa::simulate(m, c.sim.n, c.sim.t_end, c.sim.seed, {}, opts, i);
    final_grass[i] = ssa::state_fractions(res.trajectory.final_states, 2)[0];
    absorbed[i] = res.trajectory.absorbed ? 1 : 0;
  });
  csv::Writer w(out / "endstates.csv", {"jbar", "initial_grass", "replica", "final_grass", "absorbed"});
  for (std::size_t i = 0; i < runs; ++i) {
    const std::size_t j = i / (fractions.size() * reps), f = (i / reps) % fractions.size();
    w << jbars[j] << fractions[f] << i % reps << final_grass[i] << absorbed[i];
    w.end_row();
  }
  w.commit();
  a.files.push_back("endstates.csv");
  a.summary["runs"] = runs;
  return a;
}

Artifacts recipe_fig4(const ExperimentConfig& c, const fs::path& out) {
  const ModelSpec m = build_model(c.model);
  const StateIndex tracked = m.states().index_of(c.analysis.state);
  const gke::Solver solver(m, grid_for(m, c));
  const GkeRun r = run_gke(solver, c.gke.h, gke_t_end(c), gke_times(c), out / "gke_fields.csv", out / "gke_series.csv");
  Artifacts a;
  a.files = {"gke_fields.csv", "gke_series.csv"};
  csv::Writer pw(out / "period.csv", {"source", "period", "relative_spread", "max_consecutive_change", "crossings"});
  auto record = [&](const std::string& source, const std::vector<double>& t, const std::vector<double>& v) {
    const auto p = analysis::estimate_period(t, v, c.analysis.t_from, c.analysis.t_to, c.analysis.hysteresis);
    if (p) pw << source << p->period << p->relative_spread << p->max_consecutive_change << p->crossings.size();
    else pw << source << std::nan("") << std::nan("") << std::nan("") << std::size_t{0};
    pw.end_row();
    a.summary[source + "_period"] = p ? json(p->period) : json(nullptr);
  };
  {
    std::vector<double> t, v;
    for (const auto& p : r.snapshots) {
      t.push_back(p.t);
      v.push_back(masses(p, solver.grid())[tracked]);
    }
    record("gke", t, v);
  }
  auto opts = ssa_options(c.sim);
  opts.record_events = false;
  const auto times = sim_times(c);
  for (std::size_t rep = 0; rep < c.sim.replicas; ++rep) {
    const auto res = ssa::simulate(m, c.sim.n, c.sim.t_end, c.sim.seed, times, opts, rep);
    const std::string name = "ssa_series_r" + std::to_string(rep) + ".csv";
    csv::Writer w(out / name, concat({"t"}, state_header(m.states(), "frac_")));
    std::vector<double> t, v;
    for (const auto& s : res.snapshots) {
      const auto f = ssa::state_fractions(s.states, m.state_count());
      w << s.t;
      for (double x : f) w << x;
      w.end_row();
      t.push_back(s.t);
      v.push_back(f[tracked]);
    }
    w.commit();
    a.files.push_back(name);
    record("ssa_r" + std::to_string(rep), t, v);
  }
  pw.commit();
  a.files.push_back("period.csv");
  return a;
}

Artifacts recipe_fig5_waves(const ExperimentConfig& c, const fs::path& out) {
  Artifacts a;
  std::vector<double> jbars = c.analysis.jbar_values.empty() ? std::vector<double>{c.model.jbar} : c.analysis.jbar_values;
  for (double j : jbars) {
    ExperimentConfig cj = c;
    cj.model.jbar = j;
    cj.analysis.with_ssa = true;
    const std::string suffix = "_J" + tag(j);
    Artifacts part = task_fronts(cj, out, suffix);
    a.files.insert(a.files.end(), part.files.begin(), part.files.end());
    a.summary["J" + tag(j)] = part.summary;
  }
  return a;
}

Artifacts recipe_fig5_pinning(const ExperimentConfig& c, const fs::path& out) {
  std::vector<double> avg;
  Artifacts a = task_fronts(c, out, "", &avg);
  const ModelSpec m = build_model(c.model);
  const gke::Grid grid = grid_for(m, c);
  csv::Writer w(out / "zero_dispersal.csv", {"pos", "density", "grass", "stability", "kind"});
  for (double x : grid.nodes) {
    const double rho = m.measure().density(x);
    for (const auto& e : analysis::equilibria_2state(c.model.jbar, c.model.phi, rho)) {
      w << x << rho << e.grass << analysis::to_string(e.stability) << analysis::to_string(e.kind);
      w.end_row();
    }
  }
  w.commit();
  a.files.push_back("zero_dispersal.csv");

  if (c.analysis.with_ssa && !avg.empty()) {
    const auto edges = bin_edges(m.domain(), c.analysis.bin_width);
    csv::Writer pw(out / "ssa_profile.csv", {"bin_lo", "bin_hi", "mean_forest"});
    for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
      pw << edges[b] << edges[b + 1] << avg[b];
      pw.end_row();
    }
    pw.commit();
    a.files.push_back("ssa_profile.csv");
  }
  return a;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

void write_manifest(const fs::path& out, const json& manifest) {
  const fs::path tmp = out / "manifest.json.partial";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    f << manifest.dump(2) << '\n';
  }
  fs::rename(tmp, out / "manifest.json");
}

}  // namespace

ExperimentConfig resolve(const Invocation& inv) {
  const bool recipe = is_recipe(inv.name);
  if (!recipe && !is_task(inv.name))
    throw config::ConfigError({"unknown task or recipe '" + inv.name + "'"});
  json j = recipe ? recipe_defaults(inv.name) : json::object();
  if (inv.config_path) {
    const json file = config::read_file(*inv.config_path);
    if (!file.is_object()) throw config::ConfigError({inv.config_path->string() + ": top level must be an object"});
    config::merge(j, file);
  } else if (!recipe) {
    throw config::ConfigError({"task '" + inv.name + "' needs --config"});
  }
  for (const auto& o : inv.overrides) config::apply_override(j, o);
  if (inv.seed) config::apply_override(j, "sim.seed=" + std::to_string(*inv.seed));
  if (j.contains("task") && j["task"].is_string() && j["task"] != inv.name)
    throw config::ConfigError({"task: config names '" + j["task"].get<std::string>() + "' but the command runs '" +
                               inv.name + "'"});
  j["task"] = inv.name;
  std::vector<std::string> missing;
  for (const auto& s : required_sections(inv.name))
    if (!j.contains(s)) missing.push_back(s + ": section required by task '" + inv.name + "'");
  if (!missing.empty()) throw config::ConfigError(missing);
  return config::from_json(j);
}

Artifacts run_task(const std::string& task, const ExperimentConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  if (task == "simulate") return task_simulate(cfg, out);
  if (task == "gke") return task_gke(cfg, out);
  if (task == "meanfield") return task_meanfield(cfg, out);
  if (task == "qsd") return task_qsd(cfg, out);
  if (task == "equilibria") return task_equilibria(cfg, out);
  if (task == "converge") return task_converge(cfg, out);
  if (task == "chaos") return task_chaos(cfg, out);
  if (task == "fronts") return task_fronts(cfg, out);
  throw InvalidInput("unknown task '" + task + "'");
}

Artifacts run_recipe(const std::string& recipe, const ExperimentConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  if (recipe == "fig2") return recipe_fig2(cfg, out);
  if (recipe == "fig3") return task_qsd(cfg, out);
  if (recipe == "fig4") return recipe_fig4(cfg, out);
  if (recipe == "fig5_waves") return recipe_fig5_waves(cfg, out);
  if (recipe == "fig5_pinning") return recipe_fig5_pinning(cfg, out);
  throw InvalidInput("unknown recipe '" + recipe + "'");
}

int execute(const Invocation& inv, std::ostream& err) {
  ExperimentConfig cfg;
  try {
    cfg = resolve(inv);
  } catch (const config::ConfigError& e) {
    for (const auto& i : e.issues()) err << "config error: " << i << '\n';
    return kExitParse;
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << '\n';
    return kExitParse;
  }

  json manifest = {{"name", inv.name},
                   {"kind", is_recipe(inv.name) ? "recipe" : "task"},
                   {"seed", cfg.sim.seed},
                   {"version", version()},
                   {"config", config::to_json(cfg)},
                   {"started_at", utc_now()}};
  const auto start = std::chrono::steady_clock::now();
  int status = kExitOk;
  try {
    fs::create_directories(inv.out_dir);
    Artifacts a = is_recipe(inv.name) ? run_recipe(inv.name, cfg, inv.out_dir) : run_task(inv.name, cfg, inv.out_dir);
    manifest["status"] = "ok";
    manifest["files"] = a.files;
    manifest["summary"] = a.summary;
  } catch (const NumericAbort& e) {
    status = kExitNumeric;
    manifest["status"] = "numeric_abort";
    manifest["error"] = e.what();
  } catch (const ConvergenceError& e) {
    status = kExitNumeric;
    manifest["status"] = "numeric_abort";
    manifest["error"] = e.what();
  } catch (const SimulationTruncated& e) {
    status = kExitNumeric;
    manifest["status"] = "truncated";
    manifest["error"] = e.what();
  } catch (const std::exception& e) {
    status = kExitFailure;
    manifest["status"] = "error";
    manifest["error"] = e.what();
  }
  manifest["wall_time_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (status != kExitOk) err << "error: " << manifest["error"].get<std::string>() << '\n';
  try {
    write_manifest(inv.out_dir, manifest);
  } catch (const std::exception& e) {
    err << "cannot write manifest: " << e.what() << '\n';
    if (status == kExitOk) status = kExitFailure;
  }
  return status;
}

}  // namespace vegdyn::runner
