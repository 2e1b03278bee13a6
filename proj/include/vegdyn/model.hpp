#pragma once

// Model description for K-state spatial vegetation processes: state sets,
// rate functions, interaction kernels, site measures, and the validated
// ModelSpec every simulator and solver consumes.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "vegdyn/rng.hpp"

namespace vegdyn {

using StateIndex = std::size_t;

// A point of the landscape. On patch domains this holds the patch index.
using Location = double;

class StateSet {
 public:
  explicit StateSet(std::vector<std::string> labels,
                    std::optional<std::string> absorbing_hint = std::nullopt);

  std::size_t size() const { return labels_.size(); }
  const std::string& label(StateIndex s) const { return labels_.at(s); }
  const std::vector<std::string>& labels() const { return labels_; }
  std::optional<StateIndex> find(std::string_view label) const;
  StateIndex index_of(std::string_view label) const;
  std::optional<StateIndex> absorbing() const { return absorbing_; }

  bool operator==(const StateSet&) const = default;

 private:
  std::vector<std::string> labels_;
  std::optional<StateIndex> absorbing_;
};

// lo + (hi - lo) / (1 + exp(-(x - center) / slope))
struct SigmoidParams {
  double lo = 0.0;
  double hi = 1.0;
  double center = 0.5;
  double slope = 0.1;

  bool operator==(const SigmoidParams&) const = default;
};

// Clamps x to [0, 1]; throws InvalidInput on non-finite x.
double eval_sigmoid(const SigmoidParams& p, double x);
double sigmoid_lipschitz(const SigmoidParams& p);

namespace defaults {
inline constexpr SigmoidParams kPhi{0.1, 0.9, 0.4, 0.05};
inline constexpr SigmoidParams kOmega{0.9, 0.4, 0.4, 0.01};
inline constexpr double kMu = 0.1;
inline constexpr double kNu = 0.05;
}  // namespace defaults

enum class DomainKind { ring, interval, patches };

struct Domain {
  DomainKind kind = DomainKind::patches;
  double length = 1.0;
  std::size_t patches = 1;

  static Domain ring(double length) { return {DomainKind::ring, length, 0}; }
  static Domain interval(double length) { return {DomainKind::interval, length, 0}; }
  static Domain patch_set(std::size_t m) { return {DomainKind::patches, 0.0, m}; }
  bool continuous() const { return kind != DomainKind::patches; }

  bool operator==(const Domain&) const = default;
};

std::string to_string(DomainKind kind);

double ring_distance(double a, double b, double length);

// C(sigma) = L / (2 Phi(L / 2 sigma) - 1): makes a Gaussian truncated to the
// ring integrate to one against the uniform probability measure.
double ring_normalization(double sigma, double length);

class Kernel {
 public:
  struct Constant {
    double value;
    bool operator==(const Constant&) const = default;
  };
  struct GaussianRing {
    double sigma;
    double length;
    bool operator==(const GaussianRing&) const = default;
  };
  struct GaussianLine {
    double sigma;
    bool operator==(const GaussianLine&) const = default;
  };
  struct PatchMatrix {
    std::size_t size;
    std::vector<double> entries;  // row-major size x size
    bool operator==(const PatchMatrix&) const = default;
  };
  using Shape = std::variant<Constant, GaussianRing, GaussianLine, PatchMatrix>;

  static Kernel constant(double value, double amplitude = 1.0);
  static Kernel gaussian_ring(double sigma, double length, double amplitude = 1.0);
  static Kernel gaussian_line(double sigma, double amplitude = 1.0);
  static Kernel patch_matrix(std::size_t m, std::vector<double> entries, double amplitude = 1.0);

  double operator()(Location r, Location rp) const;

  // Weight as a function of separation; Gaussian and constant kinds only.
  double at_distance(double d) const;

  double sup_norm() const;
  double amplitude() const { return amplitude_; }
  const Shape& shape() const { return shape_; }
  std::optional<double> sigma() const;
  bool is_gaussian() const;
  bool is_patch() const { return std::holds_alternative<PatchMatrix>(shape_); }

  bool operator==(const Kernel& o) const {
    return shape_ == o.shape_ && amplitude_ == o.amplitude_;
  }

 private:
  Kernel(Shape shape, double amplitude);

  Shape shape_;
  double amplitude_;
  double peak_;  // amplitude times the Gaussian prefactor
};

double eval_kernel(const Kernel& k, Location r, Location rp);

class SiteMeasure {
 public:
  enum class Kind { uniform, trapezoid, discrete };

  static SiteMeasure uniform(Domain domain);
  // Density a + b x on [0, L]; requires a L + b L^2 / 2 = 1.
  static SiteMeasure trapezoid(double a, double b, Domain domain);
  static SiteMeasure discrete(std::vector<double> weights);

  Kind kind() const { return kind_; }
  const Domain& domain() const { return domain_; }
  double a() const { return a_; }
  double b() const { return b_; }
  const std::vector<double>& weights() const { return weights_; }

  // Lebesgue density on continuous domains; patch weight on patch domains.
  double density(Location x) const;
  double cdf(Location x) const;
  Location inverse_cdf(double u) const;

  bool operator==(const SiteMeasure&) const = default;

 private:
  SiteMeasure() = default;

  Kind kind_ = Kind::uniform;
  Domain domain_;
  double a_ = 0.0;
  double b_ = 0.0;
  std::vector<double> weights_;
  std::vector<double> cumulative_;
};

std::vector<Location> sample_sites(const SiteMeasure& m, std::size_t n, std::uint64_t seed);
std::vector<Location> sample_sites(const SiteMeasure& m, std::size_t n, Rng& rng);

class RateFunction {
 public:
  struct Constant {
    double value;
    bool operator==(const Constant&) const = default;
  };
  struct Linear {
    bool operator==(const Linear&) const = default;
  };
  struct Sigmoid {
    SigmoidParams params;
    bool operator==(const Sigmoid&) const = default;
  };
  using Form = std::variant<Constant, Linear, Sigmoid>;

  static RateFunction constant(double c) { return RateFunction(Constant{c}); }
  static RateFunction linear() { return RateFunction(Linear{}); }
  static RateFunction sigmoid(SigmoidParams p) { return RateFunction(Sigmoid{p}); }

  double operator()(double field) const;
  // sup over fields in [0, field_max]
  double sup_on(double field_max) const;
  double lipschitz() const;
  bool is_constant() const { return std::holds_alternative<Constant>(form_); }
  const Form& form() const { return form_; }

  bool operator==(const RateFunction&) const = default;

 private:
  explicit RateFunction(Form f) : form_(std::move(f)) {}
  Form form_;
};

struct NamedKernel {
  std::string name;
  Kernel kernel;
  bool operator==(const NamedKernel&) const = default;
};

struct TransitionSpec {
  StateIndex from = 0;
  StateIndex to = 0;
  RateFunction rate = RateFunction::constant(0.0);
  std::optional<std::size_t> kernel;       // index into ModelSpec::kernels()
  std::optional<StateIndex> depends_on;    // state counted by the kernel field

  bool operator==(const TransitionSpec&) const = default;
};

enum class InitialSampling { iid, quota };

// Per-location probability vector over states.
class InitialLaw {
 public:
  struct Segment {
    double lo;
    double hi;  // inclusive
    std::vector<double> probs;
    bool operator==(const Segment&) const = default;
  };

  InitialLaw() = default;
  static InitialLaw constant(std::vector<double> probs);
  static InitialLaw piecewise(std::vector<double> background, std::vector<Segment> segments);
  static InitialLaw per_patch(std::vector<std::vector<double>> probs);

  std::span<const double> at(Location r) const;
  // Index of the piece of the law that applies at r (used for quota sampling).
  std::size_t region(Location r) const;
  std::size_t region_count() const;

  InitialSampling sampling = InitialSampling::iid;

  const std::vector<double>& background() const { return background_; }
  const std::vector<Segment>& segments() const { return segments_; }
  const std::vector<std::vector<double>>& patch_probs() const { return patch_probs_; }

  bool operator==(const InitialLaw&) const = default;

 private:
  std::vector<double> background_;
  std::vector<Segment> segments_;
  std::vector<std::vector<double>> patch_probs_;
};

// A distinct (kernel, counted state) pair; transitions sharing one share a
// cached field in the simulators and a quadrature in the solvers.
struct FieldKey {
  std::size_t kernel;
  StateIndex depends_on;
  bool operator==(const FieldKey&) const = default;
};

class ModelSpec {
 public:
  // Validates and precomputes bounds; throws ValidationError listing every issue.
  ModelSpec(std::string family, StateSet states, std::vector<NamedKernel> kernels,
            std::vector<TransitionSpec> transitions, SiteMeasure measure, InitialLaw initial_law);

  const std::string& family() const { return family_; }
  const StateSet& states() const { return states_; }
  std::size_t state_count() const { return states_.size(); }
  const std::vector<NamedKernel>& kernels() const { return kernels_; }
  const std::vector<TransitionSpec>& transitions() const { return transitions_; }
  const SiteMeasure& measure() const { return measure_; }
  const Domain& domain() const { return measure_.domain(); }
  const InitialLaw& initial_law() const { return initial_law_; }

  const std::vector<FieldKey>& field_keys() const { return field_keys_; }
  std::optional<std::size_t> field_of(std::size_t transition) const {
    return transition_field_[transition];
  }
  // Transition indices leaving state x, in table order.
  const std::vector<std::size_t>& outgoing(StateIndex x) const { return outgoing_[x]; }

  double rate_bound(std::size_t transition) const { return rate_bounds_[transition]; }
  double outgoing_bound(StateIndex x) const { return outgoing_bounds_[x]; }
  double lipschitz() const { return lipschitz_; }
  double max_kernel_norm() const { return max_kernel_norm_; }

  bool operator==(const ModelSpec&) const = default;

 private:
  std::string family_;
  StateSet states_;
  std::vector<NamedKernel> kernels_;
  std::vector<TransitionSpec> transitions_;
  SiteMeasure measure_;
  InitialLaw initial_law_;

  std::vector<FieldKey> field_keys_;
  std::vector<std::optional<std::size_t>> transition_field_;
  std::vector<std::vector<std::size_t>> outgoing_;
  std::vector<double> rate_bounds_;
  std::vector<double> outgoing_bounds_;
  double lipschitz_ = 0.0;
  double max_kernel_norm_ = 0.0;
};

enum class Family { gf, gstf, generic };

std::string to_string(Family f);
Family family_from_string(std::string_view s);

// Raw, unvalidated description of a model, as read from configuration.
struct ModelConfig {
  Family family = Family::gf;
  Domain domain = Domain::patch_set(1);

  struct Measure {
    SiteMeasure::Kind kind = SiteMeasure::Kind::uniform;
    double a = 0.0;
    double b = 0.0;
    std::vector<double> weights;  // discrete; empty means uniform over patches
  } measure;

  // Staver-Levin family parameters.
  double jbar = 1.0;
  double beta = 0.4;
  double mu = defaults::kMu;
  double nu = defaults::kNu;
  SigmoidParams phi = defaults::kPhi;
  SigmoidParams omega = defaults::kOmega;
  double sigma = 0.05;
  // Patch domains: M x M kernel shapes, row-major; empty means all ones.
  std::vector<double> fire_matrix;
  std::vector<double> forest_seed_matrix;
  std::vector<double> savanna_seed_matrix;

  // Generic K-state family.
  struct Transition {
    std::string from;
    std::string to;
    std::string rate = "constant";  // constant | linear | sigmoid
    double value = 0.0;
    SigmoidParams sigmoid;
    std::optional<std::string> kernel;
    std::optional<std::string> depends_on;
  };
  std::vector<std::string> states;
  std::optional<std::string> absorbing;
  std::vector<NamedKernel> kernels;
  std::vector<Transition> transitions;

  struct Initial {
    using Probs = std::map<std::string, double>;
    Probs background;  // empty means uniform over states
    struct Block {
      double lo;
      double hi;
      Probs probs;
    };
    std::vector<Block> blocks;
    std::vector<Probs> per_patch;
    InitialSampling sampling = InitialSampling::iid;
  } initial;
};

ModelSpec build_model(const ModelConfig& config);

}  // namespace vegdyn
