#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vegdyn/runner.hpp"

int main(int argc, char** argv) {
  using namespace vegdyn;

  std::string tasks, recipes;
  for (const auto& t : runner::task_names()) tasks += (tasks.empty() ? "" : ", ") + t;
  for (const auto& r : runner::recipe_names()) recipes += (recipes.empty() ? "" : ", ") + r;

  CLI::App app{"Stochastic vegetation dynamics: simulators, kinetic equations and analyses.\n"
               "tasks: " + tasks + "\nrecipes: " + recipes};
  app.set_version_flag("--version", runner::version());

  runner::Invocation inv;
  std::string config_path;
  std::uint64_t seed = 0;
  app.add_option("name", inv.name, "task or recipe")->required();
  app.add_option("--config", config_path, "JSON configuration (optional for recipes)");
  app.add_option("--out", inv.out_dir, "output directory")->required();
  auto* seed_opt = app.add_option("--seed", seed, "overrides sim.seed");
  app.add_option("--set", inv.overrides, "dotted override, e.g. sim.N=500")->take_all();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : runner::kExitParse;
  }
  if (!config_path.empty()) inv.config_path = config_path;
  if (seed_opt->count()) inv.seed = seed;
  return runner::execute(inv, std::cerr);
}
