#include "certsynth/model.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "certsynth/format.hpp"

namespace certsynth {

std::string to_string(SystemKind kind) {
  switch (kind) {
    case SystemKind::ContinuousDeterministic: return "continuous";
    case SystemKind::DiscreteDeterministic: return "discrete";
    case SystemKind::DiscreteStochastic: return "stochastic";
  }
  return "continuous";
}

std::string spec_name(const Spec& spec) {
  static const char* kNames[] = {"stability",     "safety",
                                 "invariance",    "reachability",
                                 "reach_avoid",   "probabilistic_safety",
                                 "probabilistic_reachability"};
  return kNames[spec.index()];
}

ConstrainedSet ball(const Vector& center, double radius) {
  ConstrainedSet s;
  s.base = make_box(center.array() - radius, center.array() + radius);
  Expr sum = Expr::constant(0.0);
  for (Eigen::Index i = 0; i < center.size(); ++i) {
    const Expr d = Expr::binary(Op::Sub, Expr::var(VarKind::State, static_cast<int>(i)), Expr::constant(center[i]));
    sum = sum + Expr::pow(d, 2);
  }
  s.constraints.push_back(Expr::binary(Op::Sub, sum, Expr::constant(radius * radius)));
  return s;
}

namespace {

std::string join_message(const std::vector<Diagnostic>& diagnostics) {
  std::ostringstream os;
  for (std::size_t i = 0; i < diagnostics.size(); ++i) {
    if (i) os << "; ";
    os << diagnostics[i].path << ": " << diagnostics[i].message;
  }
  return os.str();
}

class Validator {
 public:
  explicit Validator(const ProblemDescription& raw) : raw_(raw) {}

  Problem run() {
    Problem p;
    p.seed = raw_.seed;
    p.system = system();
    const Dims state_only{p.system.n_state, 0, 0};
    p.domain = set(raw_.domain, "domain", state_only, nullptr);
    p.spec = spec(p.system, p.domain);
    p.certificate_shape = shape(raw_.certificate, "certificate", p.system.n_state, 1, std::nullopt);
    if (raw_.controller) {
      if (p.system.n_input == 0) {
        add("controller", "controller shape given but the system has no inputs (n_input = 0)");
      } else {
        p.controller_shape = shape(*raw_.controller, "controller", p.system.n_state, p.system.n_input,
                                   p.system.input_box.size() == p.system.n_input
                                       ? std::optional<Box>(p.system.input_box)
                                       : std::nullopt);
      }
    } else if (p.system.n_input > 0) {
      add("controller", "system has inputs but no controller shape is given");
    }
    p.rule_params = rules(p.domain);
    if (!diagnostics_.empty()) throw InvalidProblemError(diagnostics_);
    return p;
  }

 private:
  void add(std::string path, std::string message) { diagnostics_.push_back({std::move(path), std::move(message)}); }

  std::optional<Expr> expression(const std::string& text, const Dims& dims, const std::string& path) {
    try {
      return parse_expr(text, dims);
    } catch (const Error& e) {
      add(path, e.what());
      return std::nullopt;
    }
  }

  std::optional<Box> box(const std::vector<double>& lo, const std::vector<double>& hi, std::size_t dim,
                         const std::string& path) {
    bool ok = true;
    if (lo.size() != dim || hi.size() != dim) {
      add(path, "bounds must have " + std::to_string(dim) + " entries (got lo " + std::to_string(lo.size()) +
                    ", hi " + std::to_string(hi.size()) + ")");
      return std::nullopt;
    }
    Box b(static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < dim; ++i) {
      if (!std::isfinite(lo[i]) || !std::isfinite(hi[i]) || lo[i] > hi[i]) {
        add(path + ".lo[" + std::to_string(i) + "]", "need finite lo <= hi");
        ok = false;
        continue;
      }
      b[static_cast<Eigen::Index>(i)] = Interval(lo[i], hi[i]);
    }
    if (!ok) return std::nullopt;
    return b;
  }

  ConstrainedSet set(const RawSet& raw, const std::string& path, const Dims& dims, const ConstrainedSet* domain) {
    ConstrainedSet s;
    if (auto b = box(raw.lo, raw.hi, static_cast<std::size_t>(dims.n_state), path)) {
      s.base = *b;
      if (domain && domain->base.size() == b->size() && !box_subset(*b, domain->base)) {
        add(path, "base box is not contained in the domain");
      }
    } else {
      s.base = Box::Constant(std::max(dims.n_state, 0), Interval(0.0));
    }
    for (std::size_t i = 0; i < raw.constraints.size(); ++i) {
      if (auto e = expression(raw.constraints[i], dims, path + ".constraints[" + std::to_string(i) + "]")) {
        s.constraints.push_back(*e);
      }
    }
    return s;
  }

  System system() {
    System s;
    if (raw_.system_kind == "continuous") {
      s.kind = SystemKind::ContinuousDeterministic;
    } else if (raw_.system_kind == "discrete") {
      s.kind = SystemKind::DiscreteDeterministic;
    } else if (raw_.system_kind == "stochastic") {
      s.kind = SystemKind::DiscreteStochastic;
    } else {
      add("system.kind", "unknown kind '" + raw_.system_kind + "' (expected continuous, discrete, stochastic)");
    }
    s.n_state = raw_.n_state;
    s.n_input = raw_.n_input;
    if (s.n_state < 1) add("system.n_state", "must be >= 1");
    if (s.n_input < 0) add("system.n_input", "must be >= 0");

    if (s.kind == SystemKind::DiscreteStochastic) {
      if (raw_.noise_points.empty()) add("system.noise", "stochastic systems need a nonempty noise support");
      if (raw_.noise_points.size() != raw_.noise_probabilities.size()) {
        add("system.noise", "noise points and probabilities differ in length");
      }
      const std::size_t wdim = raw_.noise_points.empty() ? 0 : raw_.noise_points.front().size();
      if (!raw_.noise_points.empty() && wdim == 0) add("system.noise.points", "noise points must be nonempty vectors");
      double total = 0.0;
      for (std::size_t m = 0; m < raw_.noise_points.size(); ++m) {
        if (raw_.noise_points[m].size() != wdim) {
          add("system.noise.points[" + std::to_string(m) + "]", "inconsistent noise dimension");
          continue;
        }
        const double p = m < raw_.noise_probabilities.size() ? raw_.noise_probabilities[m] : 0.0;
        if (!(p > 0.0)) add("system.noise.probabilities[" + std::to_string(m) + "]", "probabilities must be > 0");
        total += p;
        s.noise.push_back({Eigen::Map<const Vector>(raw_.noise_points[m].data(), static_cast<Eigen::Index>(wdim)), p});
      }
      if (!raw_.noise_points.empty() && std::fabs(total - 1.0) > 1e-12) {
        std::ostringstream os;
        os << "noise probabilities sum to " << total;
        add("system.noise.probabilities", os.str());
      }
    } else if (!raw_.noise_points.empty() || !raw_.noise_probabilities.empty()) {
      add("system.noise", "noise support is only allowed for stochastic systems");
    }

    if (s.n_input > 0) {
      if (auto b = box(raw_.input_lo, raw_.input_hi, static_cast<std::size_t>(s.n_input), "system.input")) {
        s.input_box = *b;
      }
    } else if (!raw_.input_lo.empty() || !raw_.input_hi.empty()) {
      add("system.input", "input box given but n_input = 0");
    }

    if (raw_.dynamics.size() != static_cast<std::size_t>(std::max(s.n_state, 0))) {
      add("system.dynamics", "expected " + std::to_string(s.n_state) + " expressions, got " +
                                 std::to_string(raw_.dynamics.size()));
    }
    const Dims dims = s.dims();
    for (std::size_t i = 0; i < raw_.dynamics.size(); ++i) {
      if (auto e = expression(raw_.dynamics[i], dims, "system.dynamics[" + std::to_string(i) + "]")) {
        s.dynamics.push_back(*e);
      }
    }
    return s;
  }

  double positive(const std::optional<double>& v, const std::string& path, std::optional<double> fallback = {}) {
    if (!v && fallback) return *fallback;
    if (!v) {
      add(path, "required");
      return 1.0;
    }
    if (!(*v > 0.0) || !std::isfinite(*v)) add(path, "must be a finite value > 0");
    return *v;
  }

  ConstrainedSet required_set(const std::optional<RawSet>& raw, const std::string& name, const System& sys,
                              const ConstrainedSet& domain) {
    if (!raw) {
      add("spec." + name, "required for this spec kind");
      return ConstrainedSet{Box::Constant(std::max(sys.n_state, 0), Interval(0.0)), {}};
    }
    return set(*raw, "spec." + name, Dims{sys.n_state, 0, 0}, &domain);
  }

  std::vector<Vector> points(const System& sys) {
    std::vector<Vector> out;
    for (std::size_t i = 0; i < raw_.initial_points.size(); ++i) {
      if (raw_.initial_points[i].size() != static_cast<std::size_t>(sys.n_state)) {
        add("spec.initial_points[" + std::to_string(i) + "]", "dimension mismatch");
        continue;
      }
      out.emplace_back(Eigen::Map<const Vector>(raw_.initial_points[i].data(), sys.n_state));
    }
    return out;
  }

  Spec spec(const System& sys, const ConstrainedSet& domain) {
    const std::string& k = raw_.spec_kind;
    const bool continuous = sys.kind == SystemKind::ContinuousDeterministic;
    const bool stochastic = sys.kind == SystemKind::DiscreteStochastic;
    const bool probabilistic = k == "probabilistic_safety" || k == "probabilistic_reachability";
    if (probabilistic && !stochastic) {
      add("spec.kind", k + " requires a stochastic system");
    } else if (stochastic && !probabilistic && !k.empty()) {
      add("spec.kind", k + " is not available for stochastic systems; use probabilistic_safety (with a level) or "
                           "probabilistic_reachability");
    } else if (continuous && (k == "reachability" || k == "reach_avoid")) {
      add("spec.kind", k + " is only available for discrete-time systems");
    }

    if (k == "stability") {
      StabilitySpec s;
      if (raw_.equilibrium.size() != static_cast<std::size_t>(sys.n_state)) {
        add("spec.equilibrium", "must have n_state entries");
        s.equilibrium = Vector::Zero(std::max(sys.n_state, 0));
      } else {
        s.equilibrium = Eigen::Map<const Vector>(raw_.equilibrium.data(), sys.n_state);
        if (domain.base.size() == sys.n_state && !box_contains(domain.base, s.equilibrium)) {
          add("spec.equilibrium", "equilibrium lies outside the domain");
        }
      }
      double smallest = std::numeric_limits<double>::infinity();
      for (const auto& iv : domain.base) smallest = std::min(smallest, 0.5 * iv.width());
      s.radius = positive(raw_.radius, "spec.radius", 0.05 * smallest);
      return s;
    }
    if (k == "safety") {
      return SafetySpec{required_set(raw_.init, "init", sys, domain), required_set(raw_.unsafe, "unsafe", sys, domain)};
    }
    if (k == "invariance") return InvarianceSpec{required_set(raw_.inv, "inv", sys, domain)};
    if (k == "reachability") {
      return ReachabilitySpec{required_set(raw_.target, "target", sys, domain), positive(raw_.decrease, "spec.decrease")};
    }
    if (k == "reach_avoid") {
      return ReachWhileAvoidSpec{required_set(raw_.init, "init", sys, domain),
                                 required_set(raw_.target, "target", sys, domain),
                                 required_set(raw_.avoid, "avoid", sys, domain), positive(raw_.decrease, "spec.decrease")};
    }
    if (k == "probabilistic_safety") {
      return ProbabilisticSafetySpec{required_set(raw_.init, "init", sys, domain),
                                     required_set(raw_.unsafe, "unsafe", sys, domain), positive(raw_.level, "spec.level"),
                                     points(sys)};
    }
    if (k == "probabilistic_reachability") {
      return ProbabilisticReachabilitySpec{required_set(raw_.target, "target", sys, domain),
                                           positive(raw_.decrease, "spec.decrease"), points(sys)};
    }
    add("spec.kind", "unknown spec kind '" + k + "'");
    return StabilitySpec{};
  }

  NetworkShape shape(const RawShape& raw, const std::string& path, int in, int out, std::optional<Box> clamp) {
    NetworkShape s;
    s.input_dim = std::max(in, 1);
    s.output_dim = std::max(out, 1);
    s.clamp = std::move(clamp);
    if (raw.widths.size() != raw.activations.size()) {
      add(path, "widths and activations must have the same length");
      return s;
    }
    for (std::size_t l = 0; l < raw.widths.size(); ++l) {
      if (raw.widths[l] < 1) add(path + ".widths[" + std::to_string(l) + "]", "must be >= 1");
      try {
        s.hidden.push_back({std::max(raw.widths[l], 1), parse_activation(raw.activations[l])});
      } catch (const Error& e) {
        add(path + ".activations[" + std::to_string(l) + "]", e.what());
      }
    }
    return s;
  }

  RuleParams rules(const ConstrainedSet& domain) {
    RuleParams r;
    double scale = 0.0;
    for (const auto& iv : domain.base) scale = std::max(scale, 0.5 * iv.width());
    r.mu_pos = positive(raw_.mu_pos, "rules.mu_pos", 1e-4 * (scale > 0.0 ? scale : 1.0));
    r.mu_dec = positive(raw_.mu_dec, "rules.mu_dec", 1e-4);
    r.band = positive(raw_.band, "rules.band", 0.1);
    r.drift = raw_.drift.value_or(0.0);
    if (!(r.drift >= 0.0) || !std::isfinite(r.drift)) add("rules.drift", "must be a finite value >= 0");
    r.horizon = raw_.horizon.value_or(1000);
    if (r.horizon < 1) add("rules.horizon", "must be >= 1");
    if (raw_.init_level) {
      if (!(*raw_.init_level > 0.0) || !std::isfinite(*raw_.init_level)) {
        add("rules.init_level", "must be a finite value > 0");
      } else if (raw_.spec_kind != "probabilistic_safety") {
        add("rules.init_level", "only applies to probabilistic_safety");
      }
      r.init_level = raw_.init_level;
    }
    r.check_domain_invariance = raw_.check_domain_invariance.value_or(true);
    return r;
  }

  const ProblemDescription& raw_;
  std::vector<Diagnostic> diagnostics_;
};

std::vector<double> to_std(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

RawSet describe_set(const ConstrainedSet& s) {
  RawSet r;
  r.lo = to_std(box_lo(s.base));
  r.hi = to_std(box_hi(s.base));
  for (const auto& g : s.constraints) r.constraints.push_back(to_string(g));
  return r;
}

RawShape describe_shape(const NetworkShape& s) {
  RawShape r;
  for (const auto& h : s.hidden) {
    r.widths.push_back(h.width);
    r.activations.push_back(to_string(h.activation));
  }
  return r;
}

}  // namespace

InvalidProblemError::InvalidProblemError(std::vector<Diagnostic> diagnostics)
    : Error(ErrorKind::InvalidProblem, join_message(diagnostics)), diagnostics_(std::move(diagnostics)) {}

Problem validate_problem(const ProblemDescription& raw) { return Validator(raw).run(); }

ProblemDescription describe(const Problem& p) {
  ProblemDescription d;
  d.system_kind = to_string(p.system.kind);
  d.n_state = p.system.n_state;
  d.n_input = p.system.n_input;
  for (const auto& f : p.system.dynamics) d.dynamics.push_back(to_string(f));
  for (const auto& w : p.system.noise) {
    d.noise_points.push_back(to_std(w.value));
    d.noise_probabilities.push_back(w.probability);
  }
  if (p.system.n_input > 0) {
    d.input_lo = to_std(box_lo(p.system.input_box));
    d.input_hi = to_std(box_hi(p.system.input_box));
  }
  d.domain = describe_set(p.domain);
  d.spec_kind = spec_name(p.spec);
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, StabilitySpec>) {
          d.equilibrium = to_std(s.equilibrium);
          d.radius = s.radius;
        } else if constexpr (std::is_same_v<T, SafetySpec>) {
          d.init = describe_set(s.init);
          d.unsafe = describe_set(s.unsafe);
        } else if constexpr (std::is_same_v<T, InvarianceSpec>) {
          d.inv = describe_set(s.inv);
        } else if constexpr (std::is_same_v<T, ReachabilitySpec>) {
          d.target = describe_set(s.target);
          d.decrease = s.decrease;
        } else if constexpr (std::is_same_v<T, ReachWhileAvoidSpec>) {
          d.init = describe_set(s.init);
          d.target = describe_set(s.target);
          d.avoid = describe_set(s.avoid);
          d.decrease = s.decrease;
        } else if constexpr (std::is_same_v<T, ProbabilisticSafetySpec>) {
          d.init = describe_set(s.init);
          d.unsafe = describe_set(s.unsafe);
          d.level = s.level;
          for (const auto& x : s.initial_points) d.initial_points.push_back(to_std(x));
        } else {
          d.target = describe_set(s.target);
          d.decrease = s.decrease;
          for (const auto& x : s.initial_points) d.initial_points.push_back(to_std(x));
        }
      },
      p.spec);
  d.certificate = describe_shape(p.certificate_shape);
  if (p.controller_shape) d.controller = describe_shape(*p.controller_shape);
  d.mu_pos = p.rule_params.mu_pos;
  d.mu_dec = p.rule_params.mu_dec;
  d.band = p.rule_params.band;
  d.drift = p.rule_params.drift;
  d.horizon = p.rule_params.horizon;
  d.init_level = p.rule_params.init_level;
  d.check_domain_invariance = p.rule_params.check_domain_invariance;
  d.seed = p.seed;
  return d;
}

Vector step(const System& system, const Network* controller, const Vector& x, std::optional<int> noise_index) {
  if (x.size() != system.n_state) throw Error(ErrorKind::PreconditionViolated, "state dimension mismatch");
  if ((controller != nullptr) != (system.n_input > 0)) {
    throw Error(ErrorKind::PreconditionViolated, "controller must be given exactly when the system has inputs");
  }
  Vector u;
  if (controller) u = forward<double>(*controller, x);
  Vector w;
  if (system.kind == SystemKind::DiscreteStochastic) {
    if (!noise_index || *noise_index < 0 || *noise_index >= static_cast<int>(system.noise.size())) {
      throw Error(ErrorKind::PreconditionViolated, "noise index out of range");
    }
    w = system.noise[static_cast<std::size_t>(*noise_index)].value;
  }
  Vector next(system.n_state);
  for (int i = 0; i < system.n_state; ++i) next[i] = eval(system.dynamics[static_cast<std::size_t>(i)], x, u, w);
  return next;
}

bool set_membership(const ConstrainedSet& s, const Vector& x) {
  if (x.size() != s.base.size()) throw Error(ErrorKind::PreconditionViolated, "set dimension mismatch");
  if (!box_contains(s.base, x)) return false;
  for (const auto& g : s.constraints) {
    if (!(eval(g, x) <= 0.0)) return false;
  }
  return true;
}

BoxClass classify_box(const ConstrainedSet& s, const Box& b) {
  if (!box_intersects(b, s.base)) return BoxClass::Outside;
  bool all_hold = box_subset(b, s.base);
  for (const auto& g : s.constraints) {
    try {
      const Interval v = interval_eval(g, b);
      if (v.lo() > 0.0) return BoxClass::Outside;
      if (v.hi() > 0.0) all_hold = false;
    } catch (const Error&) {
      all_hold = false;
    }
  }
  return all_hold ? BoxClass::Inside : BoxClass::Undecided;
}

namespace {

template <class Accept>
std::vector<Vector> rejection_sample(const Box& base, int count, Rng& rng, Accept&& accept) {
  if (count < 1) throw Error(ErrorKind::PreconditionViolated, "sample count must be >= 1");
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(count));
  long rejections = 0;
  Vector x(base.size());
  while (static_cast<int>(out.size()) < count) {
    for (Eigen::Index i = 0; i < base.size(); ++i) {
      x[i] = base[i].is_point() ? base[i].lo() : std::uniform_real_distribution<double>(base[i].lo(), base[i].hi())(rng);
    }
    bool ok = false;
    try {
      ok = accept(x);
    } catch (const Error&) {
      ok = false;
    }
    if (ok) {
      out.push_back(x);
      rejections = 0;
    } else if (++rejections >= 1000000) {
      throw Error(ErrorKind::EmptySetSuspected, "10^6 consecutive rejections while sampling a set");
    }
  }
  return out;
}

}  // namespace

std::vector<Vector> sample_set(const ConstrainedSet& s, int count, Rng& rng) {
  return rejection_sample(s.base, count, rng, [&](const Vector& x) { return set_membership(s, x); });
}

bool region_membership(const Region& r, const Vector& x) {
  if (!set_membership(r.set, x)) return false;
  for (const auto& e : r.excluded) {
    if (set_membership(e, x)) return false;
  }
  return true;
}

BoxClass classify_region_box(const Region& r, const Box& b) {
  const BoxClass base = classify_box(r.set, b);
  if (base == BoxClass::Outside) return BoxClass::Outside;
  bool clear_of_excluded = true;
  for (const auto& e : r.excluded) {
    const BoxClass c = classify_box(e, b);
    if (c == BoxClass::Inside) return BoxClass::Outside;
    if (c != BoxClass::Outside) clear_of_excluded = false;
  }
  return base == BoxClass::Inside && clear_of_excluded ? BoxClass::Inside : BoxClass::Undecided;
}

std::vector<Vector> sample_region(const Region& r, int count, Rng& rng) {
  return rejection_sample(r.set.base, count, rng, [&](const Vector& x) { return region_membership(r, x); });
}

Vector rk4_step(const System& system, const Network* controller, const Vector& x, double dt) {
  const auto f = [&](const Vector& y) { return step(system, controller, y); };
  const Vector k1 = f(x);
  const Vector k2 = f(x + 0.5 * dt * k1);
  const Vector k3 = f(x + 0.5 * dt * k2);
  const Vector k4 = f(x + dt * k3);
  return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace certsynth
