#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "certsynth/expr.hpp"
#include "certsynth/net.hpp"

namespace certsynth {

enum class SystemKind { ContinuousDeterministic, DiscreteDeterministic, DiscreteStochastic };

std::string to_string(SystemKind kind);

struct NoisePoint {
  Vector value;
  double probability = 0.0;
};

struct System {
  SystemKind kind = SystemKind::ContinuousDeterministic;
  int n_state = 0;
  int n_input = 0;
  std::vector<Expr> dynamics;     // one per state: x' = f(x,u) or x+ = f(x,u,w)
  std::vector<NoisePoint> noise;  // finite support, DiscreteStochastic only
  Box input_box;                  // present iff n_input > 0

  int n_noise() const { return noise.empty() ? 0 : static_cast<int>(noise.front().value.size()); }
  Dims dims() const { return Dims{n_state, n_input, n_noise()}; }
  bool discrete() const { return kind != SystemKind::ContinuousDeterministic; }
};

// { x in base : g_i(x) <= 0 for all i }
struct ConstrainedSet {
  Box base;
  std::vector<Expr> constraints;

  int dim() const { return static_cast<int>(base.size()); }
};

// Closed ball { x : |x - center|^2 <= radius^2 } as a constrained set.
ConstrainedSet ball(const Vector& center, double radius);

struct StabilitySpec {
  Vector equilibrium;
  double radius = 0.0;
};
struct SafetySpec {
  ConstrainedSet init;
  ConstrainedSet unsafe;
};
struct InvarianceSpec {
  ConstrainedSet inv;
};
struct ReachabilitySpec {
  ConstrainedSet target;
  double decrease = 0.0;
};
struct ReachWhileAvoidSpec {
  ConstrainedSet init;
  ConstrainedSet target;
  ConstrainedSet avoid;
  double decrease = 0.0;
};
struct ProbabilisticSafetySpec {
  ConstrainedSet init;
  ConstrainedSet unsafe;
  double level = 1.0;
  std::vector<Vector> initial_points;  // points at which to report P(unsafe) bounds
};
struct ProbabilisticReachabilitySpec {
  ConstrainedSet target;
  double decrease = 0.0;
  std::vector<Vector> initial_points;
};

using Spec = std::variant<StabilitySpec, SafetySpec, InvarianceSpec, ReachabilitySpec, ReachWhileAvoidSpec,
                          ProbabilisticSafetySpec, ProbabilisticReachabilitySpec>;

std::string spec_name(const Spec& spec);

struct RuleParams {
  double mu_pos = 1e-4;  // scaled by the domain half-width at validation
  double mu_dec = 1e-4;
  double band = 0.1;
  // Allowed per-step expected increase in the probabilistic-safety
  // supermartingale condition; 0 gives the infinite-horizon rule.
  double drift = 0.0;
  // Horizon the drift-adjusted bound refers to.
  int horizon = 1000;
  // Probabilistic safety: when set, adds the condition B < init_level on the
  // initial set, which keeps the reported bound informative.
  std::optional<double> init_level;
  bool check_domain_invariance = true;
};

struct Problem {
  System system;
  ConstrainedSet domain;
  Spec spec;
  NetworkShape certificate_shape;
  std::optional<NetworkShape> controller_shape;
  RuleParams rule_params;
  std::uint64_t seed = 0;
};

// Raw, unvalidated description: what a problem file carries before checking.
struct RawSet {
  std::vector<double> lo;
  std::vector<double> hi;
  std::vector<std::string> constraints;
};

struct RawShape {
  std::vector<int> widths;
  std::vector<std::string> activations;
};

struct ProblemDescription {
  std::string system_kind;
  int n_state = 0;
  int n_input = 0;
  std::vector<std::string> dynamics;
  std::vector<std::vector<double>> noise_points;
  std::vector<double> noise_probabilities;
  std::vector<double> input_lo;
  std::vector<double> input_hi;
  RawSet domain;

  std::string spec_kind;
  std::vector<double> equilibrium;
  std::optional<double> radius;
  std::optional<double> decrease;
  std::optional<double> level;
  std::vector<std::vector<double>> initial_points;
  std::optional<RawSet> init, unsafe, inv, target, avoid;

  RawShape certificate;
  std::optional<RawShape> controller;

  std::optional<double> mu_pos;
  std::optional<double> mu_dec;
  std::optional<double> band;
  std::optional<double> drift;
  std::optional<int> horizon;
  std::optional<double> init_level;
  std::optional<bool> check_domain_invariance;
  std::uint64_t seed = 0;
};

struct Diagnostic {
  std::string path;  // e.g. "system.noise.probabilities"
  std::string message;
};

class InvalidProblemError : public Error {
 public:
  explicit InvalidProblemError(std::vector<Diagnostic> diagnostics);
  const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }

 private:
  std::vector<Diagnostic> diagnostics_;
};

// Checks every invariant and cross-dimension constraint; throws
// InvalidProblemError listing one diagnostic per violation.
Problem validate_problem(const ProblemDescription& raw);

// Inverse of validate_problem up to canonical formatting of expressions.
ProblemDescription describe(const Problem& problem);

// Discrete kinds: f(x, g(x), w_m). Continuous: the vector field f(x, g(x)).
Vector step(const System& system, const Network* controller, const Vector& x,
            std::optional<int> noise_index = std::nullopt);

bool set_membership(const ConstrainedSet& s, const Vector& x);

enum class BoxClass { Inside, Outside, Undecided };

BoxClass classify_box(const ConstrainedSet& s, const Box& b);

using Rng = std::mt19937_64;

// Rejection sampling, uniform on the base box.
std::vector<Vector> sample_set(const ConstrainedSet& s, int count, Rng& rng);

// A constrained set minus a union of excluded constrained sets (the
// excluded sets are closed, so their boundaries are not in the region).
struct Region {
  ConstrainedSet set;
  std::vector<ConstrainedSet> excluded;
};

bool region_membership(const Region& r, const Vector& x);
// Outside when the box misses the set or lies inside an excluded set.
BoxClass classify_region_box(const Region& r, const Box& b);
std::vector<Vector> sample_region(const Region& r, int count, Rng& rng);

// Non-certified RK4 integration of a continuous closed loop, for tests.
Vector rk4_step(const System& system, const Network* controller, const Vector& x, double dt);

}  // namespace certsynth
