#pragma once

// Experiment configuration: a strict JSON schema (unknown keys are errors),
// dotted-path overrides, and a resolved form that round-trips.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "vegdyn/gke.hpp"
#include "vegdyn/model.hpp"

namespace vegdyn::config {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> issues);
  const std::vector<std::string>& issues() const { return issues_; }

 private:
  std::vector<std::string> issues_;
};

struct SimSection {
  std::size_t n = 1000;
  double t_end = 100.0;
  std::uint64_t seed = 1;
  std::size_t replicas = 1;
  std::vector<double> snapshot_times;
  double snapshot_every = 0.0;  // > 0 adds every multiple up to t_end
  std::optional<double> cutoff_sigmas;
  bool record_events = true;
  std::size_t max_events = 200'000'000;
  std::size_t memory_budget_mb = 512;

  bool operator==(const SimSection&) const = default;
};

struct GkeSection {
  double h = 0.01;
  std::size_t nodes = 200;
  std::optional<gke::Boundary> boundary;  // default from the domain
  std::vector<double> snapshot_times;
  double snapshot_every = 0.0;
  double t_end = -1.0;  // < 0: use sim.t_end

  bool operator==(const GkeSection&) const = default;
};

struct AnalysisSection {
  std::vector<double> jbar_grid;
  std::vector<double> jbar_values;
  std::vector<std::size_t> n_list;
  std::string time_scale = "printed";
  std::size_t site_pairs = 100;
  std::size_t replicas = 0;  // 0: use sim.replicas
  double threshold = 0.5;
  double t_from = 0.0;
  double t_to = std::numeric_limits<double>::infinity();
  double hysteresis = 0.05;
  std::string state = "F";
  std::vector<double> initial_fractions;
  double location = 0.0;
  std::vector<double> checkpoints;
  bool exclude_absorbed = false;
  bool with_ssa = false;
  double bin_width = 0.25;
  double gke_step = 1e-3;

  bool operator==(const AnalysisSection&) const = default;
};

struct ExperimentConfig {
  std::string task;
  ModelConfig model;
  SimSection sim;
  GkeSection gke;
  AnalysisSection analysis;
};

// Throws ConfigError listing every problem, with JSON paths.
ExperimentConfig from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& c);

// Parses text; syntax errors become ConfigError with line/column.
nlohmann::json parse_text(const std::string& text, const std::string& source);
nlohmann::json read_file(const std::filesystem::path& path);

// Applies "a.b.c=value"; the value is read as JSON when it parses, else as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

// Recursively overlays `patch` onto `base`.
void merge(nlohmann::json& base, const nlohmann::json& patch);

// Snapshot times: explicit list plus multiples of `every` in [0, t_end], sorted, unique.
std::vector<double> snapshot_grid(const std::vector<double>& explicit_times, double every, double t_end);

}  // namespace vegdyn::config
