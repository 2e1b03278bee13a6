#include "vegdyn/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "vegdyn/errors.hpp"
#include "vegdyn/qsd.hpp"

namespace vegdyn::config {

using nlohmann::json;

namespace {

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : "; ") + x;
  return s;
}

// Reads fields of one JSON object, remembering which keys were consumed and
// collecting problems instead of stopping at the first one.
class Reader {
 public:
  Reader(const json* j, std::string path, std::vector<std::string>& issues)
      : j_(j), path_(std::move(path)), issues_(issues) {
    if (j_ && !j_->is_object()) {
      issues_.push_back(path_ + ": expected an object");
      j_ = nullptr;
    }
  }

  ~Reader() {
    if (!j_) return;
    for (const auto& [k, v] : j_->items())
      if (!seen_.count(k)) issues_.push_back(at(k) + ": unknown key");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    if (!j_) return nullptr;
    auto it = j_->find(key);
    if (it == j_->end() || it->is_null()) return nullptr;
    return &*it;
  }

  void number(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (v->is_number()) out = v->get<double>();
      else if (v->is_string() && (*v == "inf" || *v == "Infinity")) out = std::numeric_limits<double>::infinity();
      else issues_.push_back(at(key) + ": expected a number");
    }
  }

  template <class T>
  void count(const std::string& key, T& out) {
    if (const json* v = find(key)) {
      if (v->is_number_unsigned()) out = v->get<T>();
      else if (v->is_number_float() && v->get<double>() >= 0 && std::floor(v->get<double>()) == v->get<double>())
        out = static_cast<T>(v->get<double>());
      else issues_.push_back(at(key) + ": expected a non-negative integer");
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (v->is_boolean()) out = v->get<bool>();
      else issues_.push_back(at(key) + ": expected true or false");
    }
  }

  void string(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (v->is_string()) out = v->get<std::string>();
      else issues_.push_back(at(key) + ": expected a string");
    }
  }

  void numbers(const std::string& key, std::vector<double>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) {
        issues_.push_back(at(key) + ": expected an array of numbers");
        return;
      }
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number()) {
          issues_.push_back(at(key) + ": expected an array of numbers");
          return;
        }
        out.push_back(e.get<double>());
      }
    }
  }

  void counts(const std::string& key, std::vector<std::size_t>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) {
        issues_.push_back(at(key) + ": expected an array of integers");
        return;
      }
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number_unsigned()) {
          issues_.push_back(at(key) + ": expected an array of non-negative integers");
          return;
        }
        out.push_back(e.get<std::size_t>());
      }
    }
  }

  std::vector<std::string>& issues() { return issues_; }

 private:
  const json* j_;
  std::string path_;
  std::vector<std::string>& issues_;
  std::set<std::string> seen_;
};

void read_sigmoid(Reader& parent, const std::string& key, SigmoidParams& p) {
  const json* v = parent.find(key);
  if (!v) return;
  Reader r(v, parent.at(key), parent.issues());
  r.number("lo", p.lo);
  r.number("hi", p.hi);
  r.number("center", p.center);
  r.number("slope", p.slope);
}

json sigmoid_json(const SigmoidParams& p) {
  return {{"lo", p.lo}, {"hi", p.hi}, {"center", p.center}, {"slope", p.slope}};
}

ModelConfig::Initial::Probs read_probs(const json* v, const std::string& path, std::vector<std::string>& issues) {
  ModelConfig::Initial::Probs out;
  if (!v) return out;
  if (!v->is_object()) {
    issues.push_back(path + ": expected an object mapping state labels to probabilities");
    return out;
  }
  for (const auto& [k, x] : v->items()) {
    if (!x.is_number()) issues.push_back(path + "." + k + ": expected a number");
    else out[k] = x.get<double>();
  }
  return out;
}

json probs_json(const ModelConfig::Initial::Probs& p) {
  json j = json::object();
  for (const auto& [k, v] : p) j[k] = v;
  return j;
}

// JSON numbers cannot hold infinity; write it as a string the reader accepts.
json num(double v) { return std::isinf(v) ? json(v > 0 ? "inf" : "-inf") : json(v); }

std::string kernel_kind(const Kernel& k) {
  return std::visit(
      [](const auto& s) -> std::string {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, Kernel::Constant>) return "constant";
        else if constexpr (std::is_same_v<S, Kernel::GaussianRing>) return "gaussian_ring";
        else if constexpr (std::is_same_v<S, Kernel::GaussianLine>) return "gaussian_line";
        else return "patch_matrix";
      },
      k.shape());
}

void read_model(Reader& root, ModelConfig& m) {
  auto& issues = root.issues();
  const json* mj = root.find("model");
  Reader r(mj, "model", issues);

  std::string family = to_string(m.family);
  r.string("family", family);
  try {
    m.family = family_from_string(family);
  } catch (const ValidationError& e) {
    issues.push_back("model.family: " + join(e.issues()));
  }

  if (const json* pj = r.find("params")) {
    Reader p(pj, "model.params", issues);
    p.number("mu", m.mu);
    p.number("nu", m.nu);
    read_sigmoid(p, "phi", m.phi);
    read_sigmoid(p, "omega", m.omega);
  }

  if (const json* sj = r.find("states")) {
    if (!sj->is_array()) issues.push_back("model.states: expected an array of labels");
    else
      for (const auto& s : *sj) {
        if (s.is_string()) m.states.push_back(s.get<std::string>());
        else issues.push_back("model.states: labels must be strings");
      }
  }
  if (const json* aj = r.find("absorbing")) {
    if (aj->is_string()) m.absorbing = aj->get<std::string>();
    else issues.push_back("model.absorbing: expected a state label");
  }

  if (const json* kj = r.find("kernels")) {
    if (!kj->is_array()) issues.push_back("model.kernels: expected an array");
    else
      for (std::size_t i = 0; i < kj->size(); ++i) {
        const std::string path = "model.kernels[" + std::to_string(i) + "]";
        Reader k(&(*kj)[i], path, issues);
        std::string name, kind = "constant";
        double value = 1.0, sigma = 0.05, amplitude = 1.0;
        std::vector<double> entries;
        k.string("name", name);
        k.string("kind", kind);
        k.number("value", value);
        k.number("sigma", sigma);
        k.number("amplitude", amplitude);
        k.numbers("entries", entries);
        if (name.empty()) issues.push_back(path + ".name: required");
        try {
          if (kind == "constant") m.kernels.push_back({name, Kernel::constant(value, amplitude)});
          else if (kind == "gaussian_ring")
            m.kernels.push_back({name, Kernel::gaussian_ring(sigma, m.domain.length, amplitude)});
          else if (kind == "gaussian_line") m.kernels.push_back({name, Kernel::gaussian_line(sigma, amplitude)});
          else if (kind == "patch_matrix") {
            const auto side = static_cast<std::size_t>(std::llround(std::sqrt(double(entries.size()))));
            m.kernels.push_back({name, Kernel::patch_matrix(side, entries, amplitude)});
          } else
            issues.push_back(path + ".kind: unknown kernel kind '" + kind + "'");
        } catch (const std::exception& e) {
          issues.push_back(path + ": " + e.what());
        }
      }
  }

  if (const json* tj = r.find("transitions")) {
    if (!tj->is_array()) issues.push_back("model.transitions: expected an array");
    else
      for (std::size_t i = 0; i < tj->size(); ++i) {
        Reader t(&(*tj)[i], "model.transitions[" + std::to_string(i) + "]", issues);
        ModelConfig::Transition tr;
        t.string("from", tr.from);
        t.string("to", tr.to);
        t.string("rate", tr.rate);
        t.number("value", tr.value);
        read_sigmoid(t, "sigmoid", tr.sigmoid);
        std::string s;
        if (t.find("kernel")) {
          t.string("kernel", s);
          tr.kernel = s;
        }
        if (t.find("depends_on")) {
          t.string("depends_on", s);
          tr.depends_on = s;
        }
        m.transitions.push_back(std::move(tr));
      }
  }

  if (const json* ij = r.find("initial")) {
    Reader in(ij, "model.initial", issues);
    m.initial.background = read_probs(in.find("background"), "model.initial.background", issues);
    if (const json* bj = in.find("blocks")) {
      if (!bj->is_array()) issues.push_back("model.initial.blocks: expected an array");
      else
        for (std::size_t i = 0; i < bj->size(); ++i) {
          const std::string path = "model.initial.blocks[" + std::to_string(i) + "]";
          Reader b(&(*bj)[i], path, issues);
          ModelConfig::Initial::Block blk{0.0, 0.0, {}};
          b.number("lo", blk.lo);
          b.number("hi", blk.hi);
          blk.probs = read_probs(b.find("probs"), path + ".probs", issues);
          m.initial.blocks.push_back(std::move(blk));
        }
    }
    if (const json* pj = in.find("per_patch")) {
      if (!pj->is_array()) issues.push_back("model.initial.per_patch: expected an array");
      else
        for (std::size_t i = 0; i < pj->size(); ++i)
          m.initial.per_patch.push_back(
              read_probs(&(*pj)[i], "model.initial.per_patch[" + std::to_string(i) + "]", issues));
    }
    std::string sampling = m.initial.sampling == InitialSampling::iid ? "iid" : "quota";
    in.string("sampling", sampling);
    if (sampling == "iid") m.initial.sampling = InitialSampling::iid;
    else if (sampling == "quota") m.initial.sampling = InitialSampling::quota;
    else issues.push_back("model.initial.sampling: expected iid or quota");
  }
}

void read_domain(Reader& root, ModelConfig& m) {
  auto& issues = root.issues();
  Reader d(root.find("domain"), "domain", issues);
  std::string type = to_string(m.domain.kind);
  d.string("type", type);
  double length = m.domain.length > 0 ? m.domain.length : 1.0;
  std::size_t patches = m.domain.patches > 0 ? m.domain.patches : 1;
  d.number("L", length);
  d.count("M", patches);
  if (type == "ring") m.domain = Domain::ring(length);
  else if (type == "interval") m.domain = Domain::interval(length);
  else if (type == "patches") m.domain = Domain::patch_set(patches);
  else issues.push_back("domain.type: expected ring, interval or patches");

  if (const json* mj = d.find("measure")) {
    Reader q(mj, "domain.measure", issues);
    std::string kind = "uniform";
    q.string("kind", kind);
    if (kind == "uniform") m.measure.kind = SiteMeasure::Kind::uniform;
    else if (kind == "trapezoid") m.measure.kind = SiteMeasure::Kind::trapezoid;
    else if (kind == "discrete") m.measure.kind = SiteMeasure::Kind::discrete;
    else issues.push_back("domain.measure.kind: expected uniform, trapezoid or discrete");
    q.number("a", m.measure.a);
    q.number("b", m.measure.b);
    q.numbers("weights", m.measure.weights);
  }
}

void read_kernels(Reader& root, ModelConfig& m) {
  Reader k(root.find("kernels"), "kernels", root.issues());
  k.number("sigma", m.sigma);
  k.number("jbar", m.jbar);
  k.number("beta", m.beta);
  k.numbers("fire_matrix", m.fire_matrix);
  k.numbers("forest_seed_matrix", m.forest_seed_matrix);
  k.numbers("savanna_seed_matrix", m.savanna_seed_matrix);
}

void read_sim(Reader& root, SimSection& s) {
  Reader r(root.find("sim"), "sim", root.issues());
  r.count("N", s.n);
  r.number("t_end", s.t_end);
  r.count("seed", s.seed);
  r.count("replicas", s.replicas);
  r.numbers("snapshot_times", s.snapshot_times);
  r.number("snapshot_every", s.snapshot_every);
  if (r.find("cutoff_sigmas")) {
    double c = 0.0;
    r.number("cutoff_sigmas", c);
    s.cutoff_sigmas = c;
  }
  r.boolean("record_events", s.record_events);
  r.count("max_events", s.max_events);
  r.count("memory_budget_mb", s.memory_budget_mb);
}

void read_gke(Reader& root, GkeSection& g) {
  Reader r(root.find("gke"), "gke", root.issues());
  r.number("h", g.h);
  r.count("nodes", g.nodes);
  if (r.find("boundary")) {
    std::string b;
    r.string("boundary", b);
    try {
      g.boundary = gke::boundary_from_string(b);
    } catch (const std::exception& e) {
      r.issues().push_back("gke.boundary: " + std::string(e.what()));
    }
  }
  r.numbers("snapshot_times", g.snapshot_times);
  r.number("snapshot_every", g.snapshot_every);
  r.number("t_end", g.t_end);
}

// A grid is either a list or {"from", "to", "step"}.
void read_grid(Reader& r, const std::string& key, std::vector<double>& out) {
  const json* v = r.find(key);
  if (!v) return;
  if (v->is_array()) {
    r.numbers(key, out);
    return;
  }
  Reader g(v, r.at(key), r.issues());
  double from = 0, to = -1, step = 0;
  g.number("from", from);
  g.number("to", to);
  g.number("step", step);
  if (!(step > 0) || to < from) {
    r.issues().push_back(r.at(key) + ": need step > 0 and to >= from");
    return;
  }
  out.clear();
  const auto n = static_cast<std::size_t>(std::floor((to - from) / step + 1e-9));
  for (std::size_t i = 0; i <= n; ++i) out.push_back(from + static_cast<double>(i) * step);
}

void read_analysis(Reader& root, AnalysisSection& a) {
  Reader r(root.find("analysis"), "analysis", root.issues());
  read_grid(r, "jbar_grid", a.jbar_grid);
  r.numbers("jbar_values", a.jbar_values);
  r.counts("N_list", a.n_list);
  r.string("time_scale", a.time_scale);
  r.count("site_pairs", a.site_pairs);
  r.count("replicas", a.replicas);
  r.number("threshold", a.threshold);
  r.number("t_from", a.t_from);
  r.number("t_to", a.t_to);
  r.number("hysteresis", a.hysteresis);
  r.string("state", a.state);
  r.numbers("initial_fractions", a.initial_fractions);
  r.number("location", a.location);
  r.numbers("checkpoints", a.checkpoints);
  r.boolean("exclude_absorbed", a.exclude_absorbed);
  r.boolean("with_ssa", a.with_ssa);
  r.number("bin_width", a.bin_width);
  r.number("gke_step", a.gke_step);
}

void check_ranges(const ExperimentConfig& c, std::vector<std::string>& issues) {
  if (c.sim.n == 0) issues.push_back("sim.N: must be positive");
  if (!(c.sim.t_end >= 0) || !std::isfinite(c.sim.t_end)) issues.push_back("sim.t_end: must be finite and >= 0");
  if (c.sim.snapshot_every < 0) issues.push_back("sim.snapshot_every: must be >= 0");
  if (c.sim.cutoff_sigmas && !(*c.sim.cutoff_sigmas > 0)) issues.push_back("sim.cutoff_sigmas: must be positive");
  if (!(c.gke.h > 0)) issues.push_back("gke.h: must be positive");
  if (c.gke.nodes < 2) issues.push_back("gke.nodes: need at least 2");
  if (c.gke.snapshot_every < 0) issues.push_back("gke.snapshot_every: must be >= 0");
  if (c.analysis.bin_width <= 0) issues.push_back("analysis.bin_width: must be positive");
  if (c.analysis.gke_step <= 0) issues.push_back("analysis.gke_step: must be positive");
  try {
    (void)qsd::time_scale_from_string(c.analysis.time_scale);
  } catch (const std::exception& e) {
    issues.push_back("analysis.time_scale: " + std::string(e.what()));
  }
  for (double f : c.analysis.initial_fractions)
    if (f < 0 || f > 1) issues.push_back("analysis.initial_fractions: values must lie in [0, 1]");
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> issues)
    : std::runtime_error("invalid configuration: " + join(issues)), issues_(std::move(issues)) {}

ExperimentConfig from_json(const json& j) {
  std::vector<std::string> issues;
  ExperimentConfig c;
  {
    Reader root(&j, "", issues);
    root.string("task", c.task);
    // domain first: generic ring kernels need its length
    read_domain(root, c.model);
    read_model(root, c.model);
    read_kernels(root, c.model);
    read_sim(root, c.sim);
    read_gke(root, c.gke);
    read_analysis(root, c.analysis);
  }
  if (issues.empty()) check_ranges(c, issues);
  if (issues.empty()) {
    try {
      (void)build_model(c.model);
    } catch (const ValidationError& e) {
      for (const auto& s : e.issues()) issues.push_back("model: " + s);
    } catch (const InvalidInput& e) {
      issues.push_back(std::string("model: ") + e.what());
    }
  }
  if (!issues.empty()) throw ConfigError(std::move(issues));
  return c;
}

json to_json(const ExperimentConfig& c) {
  const ModelConfig& m = c.model;
  json model = {{"family", to_string(m.family)},
                {"params", {{"mu", m.mu}, {"nu", m.nu}, {"phi", sigmoid_json(m.phi)}, {"omega", sigmoid_json(m.omega)}}}};
  if (m.family == Family::generic) {
    model["states"] = m.states;
    if (m.absorbing) model["absorbing"] = *m.absorbing;
    json kernels = json::array();
    for (const auto& nk : m.kernels) {
      json k = {{"name", nk.name}, {"kind", kernel_kind(nk.kernel)}, {"amplitude", nk.kernel.amplitude()}};
      std::visit(
          [&](const auto& s) {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, Kernel::Constant>) k["value"] = s.value;
            else if constexpr (std::is_same_v<S, Kernel::PatchMatrix>) k["entries"] = s.entries;
            else k["sigma"] = s.sigma;
          },
          nk.kernel.shape());
      kernels.push_back(k);
    }
    model["kernels"] = kernels;
    json trs = json::array();
    for (const auto& t : m.transitions) {
      json tj = {{"from", t.from}, {"to", t.to}, {"rate", t.rate}, {"value", t.value}, {"sigmoid", sigmoid_json(t.sigmoid)}};
      if (t.kernel) tj["kernel"] = *t.kernel;
      if (t.depends_on) tj["depends_on"] = *t.depends_on;
      trs.push_back(tj);
    }
    model["transitions"] = trs;
  }
  json blocks = json::array();
  for (const auto& b : m.initial.blocks) blocks.push_back({{"lo", b.lo}, {"hi", b.hi}, {"probs", probs_json(b.probs)}});
  json per_patch = json::array();
  for (const auto& p : m.initial.per_patch) per_patch.push_back(probs_json(p));
  model["initial"] = {{"background", probs_json(m.initial.background)},
                      {"blocks", blocks},
                      {"per_patch", per_patch},
                      {"sampling", m.initial.sampling == InitialSampling::iid ? "iid" : "quota"}};

  const char* measure_kind = m.measure.kind == SiteMeasure::Kind::uniform     ? "uniform"
                             : m.measure.kind == SiteMeasure::Kind::trapezoid ? "trapezoid"
                                                                              : "discrete";
  json domain = {{"type", to_string(m.domain.kind)},
                 {"measure", {{"kind", measure_kind}, {"a", m.measure.a}, {"b", m.measure.b}, {"weights", m.measure.weights}}}};
  if (m.domain.kind == DomainKind::patches) domain["M"] = m.domain.patches;
  else domain["L"] = m.domain.length;

  json kernels = {{"sigma", m.sigma},
                  {"jbar", m.jbar},
                  {"beta", m.beta},
                  {"fire_matrix", m.fire_matrix},
                  {"forest_seed_matrix", m.forest_seed_matrix},
                  {"savanna_seed_matrix", m.savanna_seed_matrix}};

  json sim = {{"N", c.sim.n},
              {"t_end", c.sim.t_end},
              {"seed", c.sim.seed},
              {"replicas", c.sim.replicas},
              {"snapshot_times", c.sim.snapshot_times},
              {"snapshot_every", c.sim.snapshot_every},
              {"cutoff_sigmas", c.sim.cutoff_sigmas ? json(*c.sim.cutoff_sigmas) : json(nullptr)},
              {"record_events", c.sim.record_events},
              {"max_events", c.sim.max_events},
              {"memory_budget_mb", c.sim.memory_budget_mb}};

  json gk = {{"h", c.gke.h},
             {"nodes", c.gke.nodes},
             {"boundary", c.gke.boundary ? json(gke::to_string(*c.gke.boundary)) : json(nullptr)},
             {"snapshot_times", c.gke.snapshot_times},
             {"snapshot_every", c.gke.snapshot_every},
             {"t_end", c.gke.t_end}};

  const AnalysisSection& a = c.analysis;
  json an = {{"jbar_grid", a.jbar_grid},
             {"jbar_values", a.jbar_values},
             {"N_list", a.n_list},
             {"time_scale", a.time_scale},
             {"site_pairs", a.site_pairs},
             {"replicas", a.replicas},
             {"threshold", a.threshold},
             {"t_from", num(a.t_from)},
             {"t_to", num(a.t_to)},
             {"hysteresis", a.hysteresis},
             {"state", a.state},
             {"initial_fractions", a.initial_fractions},
             {"location", a.location},
             {"checkpoints", a.checkpoints},
             {"exclude_absorbed", a.exclude_absorbed},
             {"with_ssa", a.with_ssa},
             {"bin_width", a.bin_width},
             {"gke_step", a.gke_step}};

  return {{"task", c.task}, {"model", model}, {"domain", domain}, {"kernels", kernels},
          {"sim", sim},     {"gke", gk},      {"analysis", an}};
}

json parse_text(const std::string& text, const std::string& source) {
  try {
    return json::parse(text, nullptr, true, /*ignore_comments=*/false);
  } catch (const json::parse_error& e) {
    throw ConfigError({source + ": " + e.what()});
  }
}

json read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError({path.string() + ": cannot open"});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str(), path.string());
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError({"--set " + assignment + ": expected key=value"});
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError({"--set " + assignment + ": empty path component"});
    if (node->is_null()) *node = json::object();
    if (!node->is_object()) throw ConfigError({"--set " + assignment + ": '" + part + "' is not inside an object"});
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

void merge(json& base, const json& patch) {
  if (!patch.is_object() || !base.is_object()) {
    base = patch;
    return;
  }
  for (const auto& [k, v] : patch.items()) {
    if (base.contains(k) && base[k].is_object() && v.is_object()) merge(base[k], v);
    else base[k] = v;
  }
}

std::vector<double> snapshot_grid(const std::vector<double>& explicit_times, double every, double t_end) {
  std::vector<double> t;
  for (double x : explicit_times)
    if (x >= 0 && x <= t_end) t.push_back(x);
  if (every > 0) {
    const auto n = static_cast<std::size_t>(std::floor(t_end / every + 1e-9));
    for (std::size_t k = 0; k <= n; ++k) t.push_back(std::min(t_end, static_cast<double>(k) * every));
  }
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end(), [](double a, double b) { return std::abs(a - b) <= 1e-12 * (1 + std::abs(a)); }),
          t.end());
  return t;
}

}  // namespace vegdyn::config
