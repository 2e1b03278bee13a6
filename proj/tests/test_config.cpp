#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vegdyn/config.hpp"
#include "vegdyn/csv.hpp"
#include "vegdyn/runner.hpp"

using namespace vegdyn;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("vegdyn_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kSmallGke = R"({
  "model": {"family": "gf", "initial": {"background": {"G": 1, "F": 0},
            "blocks": [{"lo": 1, "hi": 2.5, "probs": {"G": 0, "F": 1}}]}},
  "domain": {"type": "ring", "L": 5},
  "kernels": {"sigma": 0.2, "jbar": 1.25},
  "sim": {"N": 100, "t_end": 2},
  "gke": {"h": 0.05, "nodes": 40, "snapshot_every": 0.5}
})";

std::vector<std::string> issues_of(const json& j) {
  try {
    config::from_json(j);
  } catch (const config::ConfigError& e) {
    return e.issues();
  }
  return {};
}

bool mentions(const std::vector<std::string>& issues, const std::string& needle) {
  for (const auto& i : issues)
    if (i.find(needle) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST(Config, DefaultsFillMissingFields) {
  const auto c = config::from_json(json::parse(R"({"model": {"family": "gstf"}, "kernels": {"jbar": 0.25}})"));
  EXPECT_EQ(c.model.family, Family::gstf);
  EXPECT_DOUBLE_EQ(c.model.jbar, 0.25);
  EXPECT_DOUBLE_EQ(c.model.mu, defaults::kMu);
  EXPECT_EQ(c.model.domain.kind, DomainKind::patches);
  EXPECT_EQ(c.sim.n, 1000u);
}

TEST(Config, UnknownKeysRejectedWithPaths) {
  const auto issues = issues_of(json::parse(R"({"sim": {"Nx": 5}, "bogus": 1, "model": {"params": {"phi": {"mid": 1}}}})"));
  EXPECT_TRUE(mentions(issues, "sim.Nx"));
  EXPECT_TRUE(mentions(issues, "bogus"));
  EXPECT_TRUE(mentions(issues, "model.params.phi.mid"));
}

TEST(Config, TypeAndRangeErrors) {
  EXPECT_TRUE(mentions(issues_of(json::parse(R"({"sim": {"N": "many"}})")), "sim.N"));
  EXPECT_TRUE(mentions(issues_of(json::parse(R"({"sim": {"N": 0}})")), "sim.N"));
  EXPECT_TRUE(mentions(issues_of(json::parse(R"({"gke": {"h": -1}})")), "gke.h"));
  EXPECT_TRUE(mentions(issues_of(json::parse(R"({"domain": {"type": "torus"}})")), "domain.type"));
  EXPECT_TRUE(mentions(issues_of(json::parse(R"({"kernels": {"jbar": -2}})")), "jbar"));
  EXPECT_TRUE(mentions(issues_of(json::parse("[1, 2]")), "expected an object"));
}

TEST(Config, SyntaxErrorReportsLineAndColumn) {
  try {
    config::parse_text("{\n  \"sim\": {\"N\": 5,}\n}", "cfg.json");
    FAIL();
  } catch (const config::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(config::parse_text("", "empty.json"), config::ConfigError);
}

TEST(Config, OverridesUseDottedPaths) {
  json j = json::object();
  config::apply_override(j, "sim.N=500");
  config::apply_override(j, "gke.boundary=reflecting");
  config::apply_override(j, "analysis.N_list=[10,20]");
  config::apply_override(j, "kernels.jbar=0.7");
  EXPECT_EQ(j["sim"]["N"], 500);
  EXPECT_EQ(j["gke"]["boundary"], "reflecting");
  EXPECT_EQ(j["analysis"]["N_list"].size(), 2u);
  const auto c = config::from_json(j);
  EXPECT_EQ(c.sim.n, 500u);
  EXPECT_DOUBLE_EQ(c.model.jbar, 0.7);
  EXPECT_THROW(config::apply_override(j, "noequals"), config::ConfigError);
  EXPECT_THROW(config::apply_override(j, "sim.N.deeper=1"), config::ConfigError);
}

TEST(Config, ResolvedFormRoundTrips) {
  std::vector<json> inputs;
  for (const auto& r : runner::recipe_names()) inputs.push_back(runner::recipe_defaults(r));
  inputs.push_back(json::parse(kSmallGke));
  inputs.push_back(json::parse(R"({
    "model": {"family": "generic", "states": ["A", "B"], "absorbing": "B",
              "kernels": [{"name": "K", "kind": "gaussian_ring", "sigma": 0.3, "amplitude": 2}],
              "transitions": [{"from": "A", "to": "B", "rate": "sigmoid", "kernel": "K", "depends_on": "B",
                               "sigmoid": {"lo": 0.1, "hi": 0.5, "center": 0.3, "slope": 0.1}},
                              {"from": "B", "to": "A", "rate": "constant", "value": 0.2}]},
    "domain": {"type": "ring", "L": 3},
    "sim": {"cutoff_sigmas": 6}
  })"));
  for (const auto& in : inputs) {
    const json resolved = config::to_json(config::from_json(in));
    const json again = config::to_json(config::from_json(resolved));
    EXPECT_EQ(resolved, again) << resolved.dump();
  }
}

TEST(Config, SnapshotGrid) {
  const auto g = config::snapshot_grid({0.25, 3.0, 9.0}, 1.0, 3.0);
  const std::vector<double> want{0.0, 0.25, 1.0, 2.0, 3.0};
  EXPECT_EQ(g, want);
}

TEST(Csv, FormatRoundTripsAndNanIsEmpty) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 12345.678, -2.5}) EXPECT_EQ(std::stod(csv::format(v)), v);
  EXPECT_EQ(csv::format(std::nan("")), "");
}

TEST(Csv, WriterCommitsAtomically) {
  const fs::path dir = scratch("csv");
  {
    csv::Writer w(dir / "a.csv", {"x", "y"});
    w << 1.5 << "q";
    w.end_row();
    EXPECT_THROW(w.end_row(), std::logic_error);
  }
  EXPECT_TRUE(fs::exists(dir / "a.csv.partial"));
  EXPECT_FALSE(fs::exists(dir / "a.csv"));
  csv::Writer w(dir / "b.csv", {"x"});
  w << 2;
  w.end_row();
  w.commit();
  EXPECT_EQ(slurp(dir / "b.csv"), "x\n2\n");
}

TEST(Runner, EmptyConfigExitsWithParseError) {
  const fs::path dir = scratch("empty");
  runner::Invocation inv{"gke", write_file(dir / "cfg.json", ""), dir / "out", std::nullopt, {}};
  std::ostringstream err;
  EXPECT_EQ(runner::execute(inv, err), runner::kExitParse);
  EXPECT_NE(err.str().find("cfg.json"), std::string::npos);
}

TEST(Runner, MissingSectionAndUnknownTask) {
  const fs::path dir = scratch("missing");
  std::ostringstream err;
  runner::Invocation inv{"simulate", write_file(dir / "cfg.json", R"({"model": {"family": "gf"}})"), dir / "out",
                         std::nullopt, {}};
  EXPECT_EQ(runner::execute(inv, err), runner::kExitParse);
  EXPECT_NE(err.str().find("domain"), std::string::npos);
  inv.name = "dance";
  EXPECT_EQ(runner::execute(inv, err), runner::kExitParse);
}

TEST(Runner, GkeTaskWritesArtifactsAndManifest) {
  const fs::path dir = scratch("gke");
  runner::Invocation inv{"gke", write_file(dir / "cfg.json", kSmallGke), dir / "out", 7, {"gke.nodes=50"}};
  std::ostringstream err;
  ASSERT_EQ(runner::execute(inv, err), runner::kExitOk) << err.str();
  const json manifest = json::parse(slurp(dir / "out" / "manifest.json"));
  EXPECT_EQ(manifest["status"], "ok");
  EXPECT_EQ(manifest["seed"], 7);
  EXPECT_EQ(manifest["config"]["gke"]["nodes"], 50);
  EXPECT_TRUE(manifest.contains("wall_time_seconds"));
  // manifest config resolves to itself
  EXPECT_EQ(config::to_json(config::from_json(manifest["config"])), manifest["config"]);
  const auto lines = csv::read_lines(dir / "out" / "fields.csv");
  EXPECT_EQ(lines.front(), "t,node,pos,P_G,P_F");
  EXPECT_EQ(lines.size(), 1u + 5u * 50u);
}

TEST(Runner, RerunsAreByteIdentical) {
  const fs::path dir = scratch("rerun");
  const fs::path cfg = write_file(dir / "cfg.json", kSmallGke);
  std::ostringstream err;
  for (const char* task : {"simulate", "fronts"}) {
    std::vector<std::string> sets{"sim.snapshot_every=0.5", "analysis.with_ssa=true"};
    runner::Invocation a{task, cfg, dir / (std::string(task) + "_a"), 3, sets};
    runner::Invocation b{task, cfg, dir / (std::string(task) + "_b"), 3, sets};
    ASSERT_EQ(runner::execute(a, err), 0) << err.str();
    ASSERT_EQ(runner::execute(b, err), 0) << err.str();
    for (const auto& entry : fs::directory_iterator(a.out_dir)) {
      if (entry.path().extension() != ".csv") continue;
      const auto other = b.out_dir / entry.path().filename();
      EXPECT_EQ(slurp(entry.path()), slurp(other)) << entry.path();
      EXPECT_FALSE(csv::read_lines(entry.path()).empty());
    }
  }
}

TEST(Runner, NumericAbortExitsThreeAndKeepsPartialFile) {
  const fs::path dir = scratch("abort");
  runner::Invocation inv{"gke", write_file(dir / "cfg.json", kSmallGke), dir / "out", std::nullopt, {"gke.h=4"}};
  std::ostringstream err;
  EXPECT_EQ(runner::execute(inv, err), runner::kExitNumeric);
  EXPECT_TRUE(fs::exists(dir / "out" / "fields.csv.partial"));
  EXPECT_FALSE(fs::exists(dir / "out" / "fields.csv"));
  const json manifest = json::parse(slurp(dir / "out" / "manifest.json"));
  EXPECT_EQ(manifest["status"], "numeric_abort");
}

TEST(Runner, QsdAndEquilibriaTasks) {
  const fs::path dir = scratch("qsd");
  const fs::path cfg = write_file(dir / "cfg.json", R"({"model": {"family": "gf"},
    "analysis": {"N_list": [20, 40], "jbar_grid": {"from": 0.3, "to": 0.7, "step": 0.1}}})");
  std::ostringstream err;
  ASSERT_EQ(runner::execute({"qsd", cfg, dir / "q", std::nullopt, {}}, err), 0) << err.str();
  EXPECT_EQ(csv::read_lines(dir / "q" / "qsd_sweep.csv").size(), 1u + 10u);
  ASSERT_EQ(runner::execute({"equilibria", cfg, dir / "e", std::nullopt, {"analysis.jbar_grid=[0.5,0.7,0.9,1.1]"}}, err), 0);
  EXPECT_EQ(csv::read_lines(dir / "e" / "branches.csv").front(), "jbar,grass,stability,kind");
}

TEST(Runner, TaskNameMustAgreeWithConfig) {
  const fs::path dir = scratch("taskname");
  const fs::path cfg = write_file(dir / "cfg.json", R"({"task": "qsd", "model": {"family": "gf"}, "analysis": {}})");
  std::ostringstream err;
  EXPECT_EQ(runner::execute({"equilibria", cfg, dir / "o", std::nullopt, {}}, err), runner::kExitParse);
}

#ifdef VEGDYN_CLI
TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("cli");
  const fs::path empty = write_file(dir / "empty.json", "");
  const std::string cli = VEGDYN_CLI;
  auto run = [&](const std::string& args) {
    const int s = std::system((cli + " " + args + " 2>/dev/null").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(run("gke --config " + empty.string() + " --out " + (dir / "o").string()), 2);
  EXPECT_EQ(run("gke --out " + (dir / "o").string()), 2);
  EXPECT_EQ(run("--help >/dev/null"), 0);
  const fs::path good = write_file(dir / "good.json", kSmallGke);
  EXPECT_EQ(run("gke --config " + good.string() + " --out " + (dir / "g").string() + " --set gke.nodes=20"), 0);
  EXPECT_TRUE(fs::exists(dir / "g" / "manifest.json"));
}
#endif
