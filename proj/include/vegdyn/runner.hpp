#pragma once

// Task and recipe dispatch behind the command-line tool. Each run writes its
// CSV artifacts plus manifest.json into the output directory.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vegdyn/config.hpp"

namespace vegdyn::runner {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitParse = 2;
inline constexpr int kExitNumeric = 3;

std::string version();

const std::vector<std::string>& task_names();
const std::vector<std::string>& recipe_names();
bool is_task(std::string_view name);
bool is_recipe(std::string_view name);

// Built-in configuration a recipe starts from.
nlohmann::json recipe_defaults(std::string_view name);

struct Invocation {
  std::string name;  // task or recipe
  std::optional<std::filesystem::path> config_path;
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;  // "a.b=value"
};

// Recipe defaults (if any), then the config file, then --set overrides and --seed.
config::ExperimentConfig resolve(const Invocation& inv);

struct Artifacts {
  std::vector<std::string> files;  // relative to the output directory
  nlohmann::json summary = nlohmann::json::object();
};

Artifacts run_task(const std::string& task, const config::ExperimentConfig& cfg, const std::filesystem::path& out);
Artifacts run_recipe(const std::string& recipe, const config::ExperimentConfig& cfg, const std::filesystem::path& out);

// Whole command: resolve, run, write the manifest. Returns the exit status.
int execute(const Invocation& inv, std::ostream& err);

}  // namespace vegdyn::runner
