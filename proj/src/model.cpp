#include "vegdyn/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "vegdyn/errors.hpp"

namespace vegdyn {

namespace {

constexpr double kExpClamp = 700.0;
constexpr double kMassTolerance = 1e-9;

double clamped_exp(double x) { return std::exp(std::clamp(x, -kExpClamp, kExpClamp)); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

std::string join(const std::vector<std::string>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "; " : "") << v[i];
  return os.str();
}

}  // namespace

ValidationError::ValidationError(std::vector<std::string> issues)
    : std::runtime_error("validation failed: " + join(issues)), issues_(std::move(issues)) {}

// ---------------------------------------------------------------------------
// StateSet

StateSet::StateSet(std::vector<std::string> labels, std::optional<std::string> absorbing_hint)
    : labels_(std::move(labels)) {
  std::vector<std::string> issues;
  if (labels_.size() < 2) issues.push_back("a state set needs at least two states");
  std::set<std::string> seen;
  for (const auto& l : labels_) {
    if (l.empty()) issues.push_back("empty state label");
    if (!seen.insert(l).second) issues.push_back("duplicate state label '" + l + "'");
  }
  if (absorbing_hint) {
    auto it = std::find(labels_.begin(), labels_.end(), *absorbing_hint);
    if (it == labels_.end())
      issues.push_back("absorbing hint '" + *absorbing_hint + "' is not a state");
    else
      absorbing_ = static_cast<StateIndex>(it - labels_.begin());
  }
  if (!issues.empty()) throw ValidationError(std::move(issues));
}

std::optional<StateIndex> StateSet::find(std::string_view label) const {
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] == label) return i;
  return std::nullopt;
}

StateIndex StateSet::index_of(std::string_view label) const {
  if (auto s = find(label)) return *s;
  throw InvalidInput("unknown state label '" + std::string(label) + "'");
}

// ---------------------------------------------------------------------------
// Sigmoids

double eval_sigmoid(const SigmoidParams& p, double x) {
  if (!std::isfinite(x)) throw InvalidInput("sigmoid evaluated at a non-finite cover fraction");
  const double u = std::clamp(x, 0.0, 1.0);
  return p.lo + (p.hi - p.lo) / (1.0 + clamped_exp(-(u - p.center) / p.slope));
}

double sigmoid_lipschitz(const SigmoidParams& p) { return std::abs(p.hi - p.lo) / (4.0 * p.slope); }

// ---------------------------------------------------------------------------
// Domains and kernels

std::string to_string(DomainKind kind) {
  switch (kind) {
    case DomainKind::ring: return "ring";
    case DomainKind::interval: return "interval";
    case DomainKind::patches: return "patches";
  }
  return "?";
}

double ring_distance(double a, double b, double length) {
  double d = std::fmod(std::abs(a - b), length);
  return std::min(d, length - d);
}

double ring_normalization(double sigma, double length) {
  return length / (2.0 * normal_cdf(length / (2.0 * sigma)) - 1.0);
}

Kernel::Kernel(Shape shape, double amplitude) : shape_(std::move(shape)), amplitude_(amplitude) {
  if (!(amplitude_ >= 0.0) || !std::isfinite(amplitude_))
    throw ValidationError({"kernel amplitude must be finite and nonnegative"});
  const double root2pi = std::sqrt(2.0 * std::numbers::pi);
  if (auto* g = std::get_if<GaussianRing>(&shape_)) {
    if (!(g->sigma > 0.0)) throw ValidationError({"gaussian kernel needs sigma > 0"});
    if (!(g->length > 0.0)) throw ValidationError({"ring kernel needs length > 0"});
    peak_ = amplitude_ * ring_normalization(g->sigma, g->length) / (g->sigma * root2pi);
  } else if (auto* l = std::get_if<GaussianLine>(&shape_)) {
    if (!(l->sigma > 0.0)) throw ValidationError({"gaussian kernel needs sigma > 0"});
    peak_ = amplitude_ / (l->sigma * root2pi);
  } else if (auto* c = std::get_if<Constant>(&shape_)) {
    if (!(c->value >= 0.0)) throw ValidationError({"constant kernel must be nonnegative"});
    peak_ = amplitude_ * c->value;
  } else {
    const auto& m = std::get<PatchMatrix>(shape_);
    if (m.size == 0 || m.entries.size() != m.size * m.size)
      throw ValidationError({"patch matrix must be M x M with M >= 1"});
    double mx = 0.0;
    for (double e : m.entries) {
      if (!(e >= 0.0) || !std::isfinite(e))
        throw ValidationError({"patch matrix entries must be finite and nonnegative"});
      mx = std::max(mx, e);
    }
    peak_ = amplitude_ * mx;
  }
}

Kernel Kernel::constant(double value, double amplitude) { return {Constant{value}, amplitude}; }
Kernel Kernel::gaussian_ring(double sigma, double length, double amplitude) {
  return {GaussianRing{sigma, length}, amplitude};
}
Kernel Kernel::gaussian_line(double sigma, double amplitude) {
  return {GaussianLine{sigma}, amplitude};
}
Kernel Kernel::patch_matrix(std::size_t m, std::vector<double> entries, double amplitude) {
  return {PatchMatrix{m, std::move(entries)}, amplitude};
}

double Kernel::at_distance(double d) const {
  if (auto* g = std::get_if<GaussianRing>(&shape_))
    return peak_ * clamped_exp(-d * d / (2.0 * g->sigma * g->sigma));
  if (auto* l = std::get_if<GaussianLine>(&shape_))
    return peak_ * clamped_exp(-d * d / (2.0 * l->sigma * l->sigma));
  if (std::holds_alternative<Constant>(shape_)) return peak_;
  throw InvalidInput("patch kernels have no distance profile");
}

double Kernel::operator()(Location r, Location rp) const {
  if (auto* g = std::get_if<GaussianRing>(&shape_)) return at_distance(ring_distance(r, rp, g->length));
  if (std::holds_alternative<GaussianLine>(shape_)) return at_distance(std::abs(r - rp));
  if (std::holds_alternative<Constant>(shape_)) return peak_;
  const auto& m = std::get<PatchMatrix>(shape_);
  const auto i = static_cast<long long>(std::llround(r));
  const auto j = static_cast<long long>(std::llround(rp));
  const auto n = static_cast<long long>(m.size);
  if (i < 0 || j < 0 || i >= n || j >= n)
    throw std::out_of_range("patch index out of range for " + std::to_string(m.size) + "x" +
                            std::to_string(m.size) + " kernel");
  return amplitude_ * m.entries[static_cast<std::size_t>(i * n + j)];
}

double Kernel::sup_norm() const { return peak_; }

std::optional<double> Kernel::sigma() const {
  if (auto* g = std::get_if<GaussianRing>(&shape_)) return g->sigma;
  if (auto* l = std::get_if<GaussianLine>(&shape_)) return l->sigma;
  return std::nullopt;
}

bool Kernel::is_gaussian() const {
  return std::holds_alternative<GaussianRing>(shape_) || std::holds_alternative<GaussianLine>(shape_);
}

double eval_kernel(const Kernel& k, Location r, Location rp) { return k(r, rp); }

// ---------------------------------------------------------------------------
// Site measures

SiteMeasure SiteMeasure::uniform(Domain domain) {
  SiteMeasure m;
  m.kind_ = Kind::uniform;
  m.domain_ = domain;
  if (domain.kind == DomainKind::patches) {
    if (domain.patches == 0) throw ValidationError({"patch domain needs M >= 1"});
    m.kind_ = Kind::discrete;
    m.weights_.assign(domain.patches, 1.0 / static_cast<double>(domain.patches));
    m.cumulative_.resize(domain.patches);
    std::partial_sum(m.weights_.begin(), m.weights_.end(), m.cumulative_.begin());
  } else if (!(domain.length > 0.0)) {
    throw ValidationError({"domain length must be positive"});
  }
  return m;
}

SiteMeasure SiteMeasure::trapezoid(double a, double b, Domain domain) {
  std::vector<std::string> issues;
  if (!domain.continuous()) issues.push_back("trapezoid measure needs a continuous domain");
  if (!(domain.length > 0.0)) issues.push_back("domain length must be positive");
  if (a < 0.0 || b < 0.0) issues.push_back("trapezoid coefficients must be nonnegative");
  if (a == 0.0 && b == 0.0) issues.push_back("trapezoid density is identically zero");
  const double mass = a * domain.length + 0.5 * b * domain.length * domain.length;
  if (std::abs(mass - 1.0) > kMassTolerance) {
    std::ostringstream os;
    os << "trapezoid density must have unit mass (a L + b L^2 / 2 = " << mass << ")";
    issues.push_back(os.str());
  }
  if (!issues.empty()) throw ValidationError(std::move(issues));
  SiteMeasure m;
  m.kind_ = Kind::trapezoid;
  m.domain_ = domain;
  m.a_ = a;
  m.b_ = b;
  return m;
}

SiteMeasure SiteMeasure::discrete(std::vector<double> weights) {
  std::vector<std::string> issues;
  if (weights.empty()) issues.push_back("discrete measure needs at least one patch");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) issues.push_back("discrete weights must be nonnegative");
    total += w;
  }
  if (!weights.empty() && std::abs(total - 1.0) > kMassTolerance)
    issues.push_back("discrete weights must sum to 1");
  if (!issues.empty()) throw ValidationError(std::move(issues));
  SiteMeasure m;
  m.kind_ = Kind::discrete;
  m.domain_ = Domain::patch_set(weights.size());
  m.weights_ = std::move(weights);
  m.cumulative_.resize(m.weights_.size());
  std::partial_sum(m.weights_.begin(), m.weights_.end(), m.cumulative_.begin());
  return m;
}

double SiteMeasure::density(Location x) const {
  switch (kind_) {
    case Kind::uniform: return 1.0 / domain_.length;
    case Kind::trapezoid: return a_ + b_ * x;
    case Kind::discrete: return weights_.at(static_cast<std::size_t>(std::llround(x)));
  }
  return 0.0;
}

double SiteMeasure::cdf(Location x) const {
  switch (kind_) {
    case Kind::uniform: return std::clamp(x / domain_.length, 0.0, 1.0);
    case Kind::trapezoid: {
      const double y = std::clamp(x, 0.0, domain_.length);
      return a_ * y + 0.5 * b_ * y * y;
    }
    case Kind::discrete: {
      if (x < 0.0) return 0.0;
      const auto k = std::min<std::size_t>(static_cast<std::size_t>(std::floor(x)), weights_.size() - 1);
      return cumulative_[k];
    }
  }
  return 0.0;
}

Location SiteMeasure::inverse_cdf(double u) const {
  switch (kind_) {
    case Kind::uniform: return domain_.length * u;
    case Kind::trapezoid:
      if (b_ == 0.0) return u / a_;
      return (-a_ + std::sqrt(a_ * a_ + 2.0 * b_ * u)) / b_;
    case Kind::discrete: {
      auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
      auto k = static_cast<std::size_t>(it - cumulative_.begin());
      k = std::min(k, weights_.size() - 1);
      while (weights_[k] == 0.0 && k > 0) --k;  // never land on an empty atom
      return static_cast<Location>(k);
    }
  }
  return 0.0;
}

std::vector<Location> sample_sites(const SiteMeasure& m, std::size_t n, Rng& rng) {
  std::vector<Location> out(n);
  for (auto& x : out) x = m.inverse_cdf(uniform01(rng));
  return out;
}

std::vector<Location> sample_sites(const SiteMeasure& m, std::size_t n, std::uint64_t seed) {
  Rng rng = make_stream(seed);
  return sample_sites(m, n, rng);
}

// ---------------------------------------------------------------------------
// Rate functions

double RateFunction::operator()(double field) const {
  if (auto* c = std::get_if<Constant>(&form_)) return c->value;
  if (std::holds_alternative<Linear>(form_)) return std::max(field, 0.0);
  return eval_sigmoid(std::get<Sigmoid>(form_).params, field);
}

double RateFunction::sup_on(double field_max) const {
  if (auto* c = std::get_if<Constant>(&form_)) return c->value;
  if (std::holds_alternative<Linear>(form_)) return field_max;
  const auto& p = std::get<Sigmoid>(form_).params;
  return std::max(eval_sigmoid(p, 0.0), eval_sigmoid(p, field_max));
}

double RateFunction::lipschitz() const {
  if (std::holds_alternative<Constant>(form_)) return 0.0;
  if (std::holds_alternative<Linear>(form_)) return 1.0;
  return sigmoid_lipschitz(std::get<Sigmoid>(form_).params);
}

// ---------------------------------------------------------------------------
// Initial laws

InitialLaw InitialLaw::constant(std::vector<double> probs) {
  InitialLaw law;
  law.background_ = std::move(probs);
  return law;
}

InitialLaw InitialLaw::piecewise(std::vector<double> background, std::vector<Segment> segments) {
  InitialLaw law;
  law.background_ = std::move(background);
  law.segments_ = std::move(segments);
  return law;
}

InitialLaw InitialLaw::per_patch(std::vector<std::vector<double>> probs) {
  InitialLaw law;
  law.patch_probs_ = std::move(probs);
  return law;
}

std::size_t InitialLaw::region(Location r) const {
  if (!patch_probs_.empty()) {
    const auto k = static_cast<std::size_t>(std::llround(r));
    if (k >= patch_probs_.size()) throw std::out_of_range("initial law has no entry for patch");
    return k;
  }
  for (std::size_t s = 0; s < segments_.size(); ++s)
    if (r >= segments_[s].lo && r <= segments_[s].hi) return s + 1;
  return 0;
}

std::size_t InitialLaw::region_count() const {
  return patch_probs_.empty() ? segments_.size() + 1 : patch_probs_.size();
}

std::span<const double> InitialLaw::at(Location r) const {
  if (!patch_probs_.empty()) return patch_probs_[region(r)];
  const auto k = region(r);
  return k == 0 ? std::span<const double>(background_) : std::span<const double>(segments_[k - 1].probs);
}

// ---------------------------------------------------------------------------
// ModelSpec

ModelSpec::ModelSpec(std::string family, StateSet states, std::vector<NamedKernel> kernels,
                     std::vector<TransitionSpec> transitions, SiteMeasure measure,
                     InitialLaw initial_law)
    : family_(std::move(family)),
      states_(std::move(states)),
      kernels_(std::move(kernels)),
      transitions_(std::move(transitions)),
      measure_(std::move(measure)),
      initial_law_(std::move(initial_law)) {
  const std::size_t k = states_.size();
  std::vector<std::string> issues;

  std::set<std::string> kernel_names;
  for (const auto& nk : kernels_) {
    if (!kernel_names.insert(nk.name).second) issues.push_back("duplicate kernel name '" + nk.name + "'");
    const Domain& d = measure_.domain();
    if (nk.kernel.is_patch()) {
      const auto& pm = std::get<Kernel::PatchMatrix>(nk.kernel.shape());
      if (d.kind != DomainKind::patches || pm.size != d.patches)
        issues.push_back("kernel '" + nk.name + "' is a patch matrix that does not match the domain");
    } else if (nk.kernel.is_gaussian() && !d.continuous()) {
      issues.push_back("kernel '" + nk.name + "' is Gaussian but the domain is a patch set");
    }
    if (auto* g = std::get_if<Kernel::GaussianRing>(&nk.kernel.shape())) {
      if (d.kind != DomainKind::ring || std::abs(g->length - d.length) > 1e-12)
        issues.push_back("kernel '" + nk.name + "' is a ring kernel on a different domain");
    }
  }

  std::set<std::pair<StateIndex, StateIndex>> pairs;
  for (std::size_t t = 0; t < transitions_.size(); ++t) {
    const auto& tr = transitions_[t];
    const std::string tag = "transition " + std::to_string(t);
    if (tr.from >= k || tr.to >= k) {
      issues.push_back(tag + " references an unknown state");
      continue;
    }
    const std::string name = states_.label(tr.from) + "->" + states_.label(tr.to);
    if (tr.from == tr.to) issues.push_back(tag + " (" + name + ") is a self-transition");
    if (!pairs.insert({tr.from, tr.to}).second) issues.push_back("duplicate transition " + name);
    if (tr.depends_on && *tr.depends_on >= k) issues.push_back(name + " depends on an unknown state");
    if (!tr.depends_on && !tr.rate.is_constant())
      issues.push_back(name + " has no dependency but a field-dependent rate");
    if (tr.depends_on && !tr.kernel) issues.push_back(name + " is field-dependent but has no kernel");
    if (tr.kernel && *tr.kernel >= kernels_.size()) issues.push_back(name + " references a missing kernel");
    if (auto* c = std::get_if<RateFunction::Constant>(&tr.rate.form())) {
      if (!(c->value >= 0.0) || !std::isfinite(c->value)) issues.push_back(name + " has a negative rate");
    }
    if (auto* s = std::get_if<RateFunction::Sigmoid>(&tr.rate.form())) {
      const auto& p = s->params;
      if (!(p.slope > 0.0)) issues.push_back(name + " sigmoid slope must be positive");
      if (!(p.lo >= 0.0) || !(p.hi >= 0.0)) issues.push_back(name + " sigmoid levels must be nonnegative");
      if (!std::isfinite(p.center)) issues.push_back(name + " sigmoid center must be finite");
    }
  }

  const auto check_probs = [&](std::span<const double> p, const std::string& where) {
    if (p.size() != k) {
      issues.push_back("initial law at " + where + " has " + std::to_string(p.size()) +
                       " entries, expected " + std::to_string(k));
      return;
    }
    double total = 0.0;
    for (double v : p) {
      if (!(v >= 0.0)) issues.push_back("initial law at " + where + " has a negative probability");
      total += v;
    }
    if (std::abs(total - 1.0) > kMassTolerance)
      issues.push_back("initial law at " + where + " does not sum to 1");
  };
  if (!initial_law_.patch_probs().empty()) {
    if (measure_.domain().kind != DomainKind::patches ||
        initial_law_.patch_probs().size() != measure_.domain().patches)
      issues.push_back("per-patch initial law does not match the patch count");
    for (std::size_t p = 0; p < initial_law_.patch_probs().size(); ++p)
      check_probs(initial_law_.patch_probs()[p], "patch " + std::to_string(p));
  } else {
    check_probs(initial_law_.background(), "background");
    for (const auto& seg : initial_law_.segments())
      check_probs(seg.probs, "[" + std::to_string(seg.lo) + ", " + std::to_string(seg.hi) + "]");
  }

  if (!issues.empty()) throw ValidationError(std::move(issues));

  transition_field_.assign(transitions_.size(), std::nullopt);
  outgoing_.assign(k, {});
  rate_bounds_.assign(transitions_.size(), 0.0);
  outgoing_bounds_.assign(k, 0.0);
  for (const auto& nk : kernels_) max_kernel_norm_ = std::max(max_kernel_norm_, nk.kernel.sup_norm());
  for (std::size_t t = 0; t < transitions_.size(); ++t) {
    const auto& tr = transitions_[t];
    outgoing_[tr.from].push_back(t);
    if (tr.kernel && tr.depends_on) {
      const FieldKey key{*tr.kernel, *tr.depends_on};
      auto it = std::find(field_keys_.begin(), field_keys_.end(), key);
      if (it == field_keys_.end()) {
        field_keys_.push_back(key);
        it = field_keys_.end() - 1;
      }
      transition_field_[t] = static_cast<std::size_t>(it - field_keys_.begin());
      rate_bounds_[t] = tr.rate.sup_on(kernels_[*tr.kernel].kernel.sup_norm());
    } else {
      rate_bounds_[t] = tr.rate.sup_on(0.0);
    }
    outgoing_bounds_[tr.from] += rate_bounds_[t];
    lipschitz_ = std::max(lipschitz_, tr.rate.lipschitz());
  }
}

// ---------------------------------------------------------------------------
// build_model

std::string to_string(Family f) {
  switch (f) {
    case Family::gf: return "gf";
    case Family::gstf: return "gstf";
    case Family::generic: return "generic";
  }
  return "?";
}

Family family_from_string(std::string_view s) {
  if (s == "gf") return Family::gf;
  if (s == "gstf") return Family::gstf;
  if (s == "generic") return Family::generic;
  throw ValidationError({"unknown model family '" + std::string(s) + "' (expected gf, gstf or generic)"});
}

namespace {

SiteMeasure make_measure(const ModelConfig& c) {
  switch (c.measure.kind) {
    case SiteMeasure::Kind::uniform: return SiteMeasure::uniform(c.domain);
    case SiteMeasure::Kind::trapezoid: return SiteMeasure::trapezoid(c.measure.a, c.measure.b, c.domain);
    case SiteMeasure::Kind::discrete: {
      if (c.domain.kind != DomainKind::patches)
        throw ValidationError({"discrete measure needs a patch domain"});
      if (c.measure.weights.empty()) return SiteMeasure::uniform(c.domain);
      if (c.measure.weights.size() != c.domain.patches)
        throw ValidationError({"discrete weights do not match the patch count"});
      return SiteMeasure::discrete(c.measure.weights);
    }
  }
  throw ValidationError({"unknown measure"});
}

// Spatial kernel of the given amplitude for a Staver-Levin family member.
Kernel family_kernel(const ModelConfig& c, const std::vector<double>& shape, double amplitude,
                     const std::string& name, std::vector<std::string>& issues) {
  const std::size_t m = std::max<std::size_t>(c.domain.patches, 1);
  try {
    switch (c.domain.kind) {
      case DomainKind::ring: return Kernel::gaussian_ring(c.sigma, c.domain.length, amplitude);
      case DomainKind::interval: return Kernel::gaussian_line(c.sigma, amplitude);
      case DomainKind::patches: {
        if (shape.empty()) return Kernel::patch_matrix(m, std::vector<double>(m * m, 1.0), amplitude);
        if (shape.size() != m * m) {
          issues.push_back(name + " matrix must have M*M = " + std::to_string(m * m) + " entries");
          return Kernel::patch_matrix(m, std::vector<double>(m * m, 1.0), amplitude);
        }
        return Kernel::patch_matrix(m, shape, amplitude);
      }
    }
  } catch (const ValidationError& e) {
    for (const auto& i : e.issues()) issues.push_back(name + " kernel: " + i);
    // placeholder so validation can continue; never returned to callers
    return Kernel::patch_matrix(m, std::vector<double>(m * m, 1.0), 0.0);
  }
  throw ValidationError({"unknown domain"});
}

std::vector<double> resolve_probs(const ModelConfig::Initial::Probs& probs, const StateSet& states,
                                  std::vector<std::string>& issues) {
  const std::size_t k = states.size();
  if (probs.empty()) return std::vector<double>(k, 1.0 / static_cast<double>(k));
  std::vector<double> out(k, 0.0);
  for (const auto& [label, p] : probs) {
    if (auto s = states.find(label))
      out[*s] = p;
    else
      issues.push_back("initial law names unknown state '" + label + "'");
  }
  return out;
}

InitialLaw resolve_initial(const ModelConfig::Initial& init, const StateSet& states,
                           std::vector<std::string>& issues) {
  InitialLaw law;
  if (!init.per_patch.empty()) {
    std::vector<std::vector<double>> pp;
    for (const auto& p : init.per_patch) pp.push_back(resolve_probs(p, states, issues));
    law = InitialLaw::per_patch(std::move(pp));
  } else {
    std::vector<InitialLaw::Segment> segs;
    for (const auto& b : init.blocks) {
      if (!(b.hi >= b.lo)) issues.push_back("initial block has hi < lo");
      segs.push_back({b.lo, b.hi, resolve_probs(b.probs, states, issues)});
    }
    law = InitialLaw::piecewise(resolve_probs(init.background, states, issues), std::move(segs));
  }
  law.sampling = init.sampling;
  return law;
}

void check_nonnegative(double v, const std::string& name, std::vector<std::string>& issues) {
  if (!(v >= 0.0) || !std::isfinite(v)) issues.push_back(name + " must be finite and nonnegative");
}

void check_sigmoid(const SigmoidParams& p, const std::string& name, std::vector<std::string>& issues) {
  check_nonnegative(p.lo, name + ".lo", issues);
  check_nonnegative(p.hi, name + ".hi", issues);
  if (!(p.slope > 0.0)) issues.push_back(name + ".slope must be positive");
}

}  // namespace

ModelSpec build_model(const ModelConfig& c) {
  std::vector<std::string> issues;
  SiteMeasure measure = make_measure(c);

  if (c.family == Family::gf || c.family == Family::gstf) {
    check_nonnegative(c.jbar, "jbar", issues);
    check_sigmoid(c.phi, "phi", issues);
    if (c.domain.continuous() && !(c.sigma > 0.0)) issues.push_back("sigma must be positive");
  }

  if (c.family == Family::gf) {
    StateSet states({"G", "F"}, "G");
    std::vector<NamedKernel> kernels;
    kernels.push_back({"W", family_kernel(c, c.fire_matrix, 1.0, "fire", issues)});
    kernels.push_back({"J_F", family_kernel(c, c.forest_seed_matrix, c.jbar, "forest seed", issues)});
    InitialLaw law = resolve_initial(c.initial, states, issues);
    if (!issues.empty()) throw ValidationError(std::move(issues));
    const StateIndex G = 0, F = 1;
    std::vector<TransitionSpec> tr{
        {G, F, RateFunction::linear(), 1, F},
        {F, G, RateFunction::sigmoid(c.phi), 0, G},
    };
    return ModelSpec("gf", std::move(states), std::move(kernels), std::move(tr), std::move(measure),
                     std::move(law));
  }

  if (c.family == Family::gstf) {
    check_nonnegative(c.beta, "beta", issues);
    check_nonnegative(c.mu, "mu", issues);
    check_nonnegative(c.nu, "nu", issues);
    check_sigmoid(c.omega, "omega", issues);
    StateSet states({"G", "S", "T", "F"}, "G");
    std::vector<NamedKernel> kernels;
    kernels.push_back({"W", family_kernel(c, c.fire_matrix, 1.0, "fire", issues)});
    kernels.push_back({"J_F", family_kernel(c, c.forest_seed_matrix, c.jbar, "forest seed", issues)});
    kernels.push_back({"J_S", family_kernel(c, c.savanna_seed_matrix, c.beta, "savanna seed", issues)});
    InitialLaw law = resolve_initial(c.initial, states, issues);
    if (!issues.empty()) throw ValidationError(std::move(issues));
    const StateIndex G = 0, S = 1, T = 2, F = 3;
    constexpr std::size_t W = 0, JF = 1, JS = 2;
    std::vector<TransitionSpec> tr{
        {G, S, RateFunction::linear(), JS, T},
        {G, F, RateFunction::linear(), JF, F},
        {S, F, RateFunction::linear(), JF, F},
        {T, F, RateFunction::linear(), JF, F},
        {F, G, RateFunction::sigmoid(c.phi), W, G},
        {S, T, RateFunction::sigmoid(c.omega), W, G},
        {S, G, RateFunction::constant(c.mu), std::nullopt, std::nullopt},
        {T, G, RateFunction::constant(c.nu), std::nullopt, std::nullopt},
    };
    return ModelSpec("gstf", std::move(states), std::move(kernels), std::move(tr), std::move(measure),
                     std::move(law));
  }

  // generic K-state
  StateSet states(c.states, c.absorbing);
  InitialLaw law = resolve_initial(c.initial, states, issues);
  std::vector<TransitionSpec> tr;
  for (const auto& t : c.transitions) {
    auto from = states.find(t.from);
    auto to = states.find(t.to);
    if (!from || !to) {
      issues.push_back("transition " + t.from + "->" + t.to + " names an unknown state");
      continue;
    }
    TransitionSpec spec;
    spec.from = *from;
    spec.to = *to;
    if (t.rate == "constant") {
      spec.rate = RateFunction::constant(t.value);
    } else if (t.rate == "linear") {
      spec.rate = RateFunction::linear();
    } else if (t.rate == "sigmoid") {
      spec.rate = RateFunction::sigmoid(t.sigmoid);
    } else {
      issues.push_back("transition " + t.from + "->" + t.to + " has unknown rate form '" + t.rate + "'");
      continue;
    }
    if (t.kernel) {
      auto it = std::find_if(c.kernels.begin(), c.kernels.end(),
                             [&](const NamedKernel& k) { return k.name == *t.kernel; });
      if (it == c.kernels.end())
        issues.push_back("transition " + t.from + "->" + t.to + " names unknown kernel '" + *t.kernel + "'");
      else
        spec.kernel = static_cast<std::size_t>(it - c.kernels.begin());
    }
    if (t.depends_on) {
      if (auto d = states.find(*t.depends_on))
        spec.depends_on = *d;
      else
        issues.push_back("transition " + t.from + "->" + t.to + " depends on unknown state '" +
                         *t.depends_on + "'");
    }
    tr.push_back(std::move(spec));
  }
  if (!issues.empty()) throw ValidationError(std::move(issues));
  return ModelSpec("generic", std::move(states), c.kernels, std::move(tr), std::move(measure),
                   std::move(law));
}

}  // namespace vegdyn
