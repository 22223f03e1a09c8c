#include "certsynth/rules.hpp"

#include <limits>

namespace certsynth {

ClosedLoop::ClosedLoop(System sys) : system(std::move(sys)) {
  if (system.n_input == 0) return;
  df_du.resize(system.dynamics.size());
  for (std::size_t i = 0; i < system.dynamics.size(); ++i) {
    for (int j = 0; j < system.n_input; ++j) df_du[i].push_back(differentiate(system.dynamics[i], VarKind::Input, j));
  }
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

const Vector& noise_value(const ClosedLoop& loop, int noise) {
  static const Vector kNone;
  return noise < 0 ? kNone : loop.system.noise[static_cast<std::size_t>(noise)].value;
}

Vector next_point(const ClosedLoop& loop, const NetView& nets, const Vector& x, int noise) {
  const Vector u = nets.ctrl ? forward<double>(*nets.ctrl, x) : Vector();
  const Vector& w = noise_value(loop, noise);
  Vector y(loop.system.n_state);
  for (int i = 0; i < loop.system.n_state; ++i) y[i] = eval(loop.system.dynamics[static_cast<std::size_t>(i)], x, u, w);
  return y;
}

IntervalVector next_box(const ClosedLoop& loop, const NetView& nets, const Box& b, int noise) {
  const Box bu = nets.ctrl ? interval_forward(*nets.ctrl, b) : Box();
  const Box bw = noise < 0 ? Box() : point_box(noise_value(loop, noise));
  IntervalVector y(loop.system.n_state);
  for (int i = 0; i < loop.system.n_state; ++i) {
    y[i] = interval_eval(loop.system.dynamics[static_cast<std::size_t>(i)], b, bu, bw);
  }
  return y;
}

// Columns of f-hat at the columns of X; fills the controller tape.
Matrix next_batch(const ClosedLoop& loop, const NetView& nets, const Matrix& X, int noise, BatchTape& ctrl_tape) {
  Matrix U;
  if (nets.ctrl) U = forward_batch(*nets.ctrl, X, &ctrl_tape);
  const Vector& w = noise_value(loop, noise);
  Matrix Y(loop.system.n_state, X.cols());
  Vector u;
  for (Eigen::Index k = 0; k < X.cols(); ++k) {
    const Vector x = X.col(k);
    if (nets.ctrl) u = U.col(k);
    for (int i = 0; i < loop.system.n_state; ++i) {
      Y(i, k) = eval(loop.system.dynamics[static_cast<std::size_t>(i)], x, u, w);
    }
  }
  return Y;
}

// Pulls gradients with respect to f-hat back to the controller parameters.
void chain_to_controller(const ClosedLoop& loop, const NetView& nets, const Matrix& X, const TermCache& tc,
                         int noise, const Matrix& grad_next, Vector& grad_ctrl) {
  const Matrix& U = tc.ctrl_tape.post.back();
  const Vector& w = noise_value(loop, noise);
  Matrix up = Matrix::Zero(loop.system.n_input, X.cols());
  for (Eigen::Index k = 0; k < X.cols(); ++k) {
    if (grad_next.col(k).isZero(0.0)) continue;
    const Vector x = X.col(k);
    const Vector u = U.col(k);
    for (int i = 0; i < loop.system.n_state; ++i) {
      if (grad_next(i, k) == 0.0) continue;
      for (int j = 0; j < loop.system.n_input; ++j) {
        up(j, k) += grad_next(i, k) * eval(loop.df_du[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], x, u, w);
      }
    }
  }
  backward_batch(*nets.ctrl, tc.ctrl_tape, up, grad_ctrl);
}

// Value of the set violation together with its maximizing piece: -1-i for
// the lower face of dimension i, -1-n-i for the upper face, j >= 0 for
// constraint j.
std::pair<double, int> violation_piece(const ConstrainedSet& s, const Vector& y) {
  double v = kNegInf;
  int piece = 0;
  const int n = static_cast<int>(y.size());
  for (int i = 0; i < n; ++i) {
    const double below = s.base[i].lo() - y[i];
    const double above = y[i] - s.base[i].hi();
    if (below > v) v = below, piece = -1 - i;
    if (above > v) v = above, piece = -1 - n - i;
  }
  for (std::size_t j = 0; j < s.constraints.size(); ++j) {
    const double g = eval(s.constraints[j], y);
    if (g > v) v = g, piece = static_cast<int>(j);
  }
  return {v, piece};
}

}  // namespace

double set_violation(const ConstrainedSet& s, const Vector& y) { return violation_piece(s, y).first; }

Interval set_violation(const ConstrainedSet& s, const IntervalVector& y) {
  std::optional<Interval> v;
  const auto take = [&](const Interval& c) { v = v ? max(*v, c) : c; };
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    take(Interval(s.base[i].lo()) - y[i]);
    take(y[i] - Interval(s.base[i].hi()));
  }
  for (const auto& g : s.constraints) take(interval_eval(g, y));
  return *v;
}

CompositeFn::CompositeFn(std::shared_ptr<const ClosedLoop> loop, std::vector<Term> terms)
    : loop_(std::move(loop)), terms_(std::move(terms)) {
  exit_grads_.resize(terms_.size());
  for (std::size_t t = 0; t < terms_.size(); ++t) {
    if (terms_[t].kind != TermKind::Exit) continue;
    for (const auto& s : terms_[t].sets) {
      std::vector<std::optional<std::vector<Expr>>> per_constraint;
      for (const auto& g : s.constraints) {
        try {
          std::vector<Expr> grad;
          for (int i = 0; i < s.dim(); ++i) grad.push_back(differentiate(g, i));
          per_constraint.emplace_back(std::move(grad));
        } catch (const Error&) {
          per_constraint.emplace_back(std::nullopt);
        }
      }
      exit_grads_[t].push_back(std::move(per_constraint));
    }
  }
}

double CompositeFn::value(const NetView& nets, const Vector& x) const {
  double total = 0.0;
  for (const auto& term : terms_) {
    double v = 0.0;
    switch (term.kind) {
      case TermKind::Constant: v = 1.0; break;
      case TermKind::Value: v = forward<double>(*nets.cert, x)[0]; break;
      case TermKind::ValueAt: v = forward<double>(*nets.cert, term.point)[0]; break;
      case TermKind::Next: v = forward<double>(*nets.cert, next_point(*loop_, nets, x, term.noise))[0]; break;
      case TermKind::Lie: v = input_gradient(*nets.cert, x).dot(next_point(*loop_, nets, x, -1)); break;
      case TermKind::Exit: {
        const Vector y = next_point(*loop_, nets, x, -1);
        v = std::numeric_limits<double>::infinity();
        for (const auto& s : term.sets) v = std::min(v, set_violation(s, y));
        break;
      }
      case TermKind::State: v = eval(*term.expr, x); break;
    }
    total += term.weight * v;
  }
  if (!std::isfinite(total)) throw Error(ErrorKind::NonFiniteResult, "composite value is not finite");
  return total;
}

Interval CompositeFn::enclose(const NetView& nets, const Box& b) const {
  Interval total(0.0);
  for (const auto& term : terms_) {
    Interval v;
    switch (term.kind) {
      case TermKind::Constant: v = Interval(1.0); break;
      case TermKind::Value: v = interval_forward(*nets.cert, b)[0]; break;
      case TermKind::ValueAt: v = interval_forward(*nets.cert, point_box(term.point))[0]; break;
      case TermKind::Next: v = interval_forward(*nets.cert, next_box(*loop_, nets, b, term.noise))[0]; break;
      case TermKind::Lie: {
        const IntervalVector g = interval_input_gradient(*nets.cert, b);
        const IntervalVector f = next_box(*loop_, nets, b, -1);
        v = Interval(0.0);
        for (Eigen::Index i = 0; i < g.size(); ++i) v = v + g[i] * f[i];
        break;
      }
      case TermKind::Exit: {
        const IntervalVector y = next_box(*loop_, nets, b, -1);
        std::optional<Interval> m;
        for (const auto& s : term.sets) {
          const Interval sv = set_violation(s, y);
          m = m ? min(*m, sv) : sv;
        }
        v = *m;
        break;
      }
      case TermKind::State: v = interval_eval(*term.expr, b); break;
    }
    total = total + Interval(term.weight) * v;
  }
  return total;
}

Vector CompositeFn::values(const NetView& nets, const Matrix& X, BatchCache* cache) const {
  const Eigen::Index n = X.cols();
  Vector total = Vector::Zero(n);
  BatchCache local;
  BatchCache& c = cache ? *cache : local;
  c.points = X;
  c.terms.assign(terms_.size(), TermCache{});
  for (std::size_t t = 0; t < terms_.size(); ++t) {
    const Term& term = terms_[t];
    TermCache& tc = c.terms[t];
    switch (term.kind) {
      case TermKind::Constant: total.array() += term.weight; break;
      case TermKind::Value: total += term.weight * forward_batch(*nets.cert, X, &tc.cert_tape).row(0).transpose(); break;
      case TermKind::ValueAt: total.array() += term.weight * forward<double>(*nets.cert, term.point)[0]; break;
      case TermKind::Next: {
        tc.next = next_batch(*loop_, nets, X, term.noise, tc.ctrl_tape);
        total += term.weight * forward_batch(*nets.cert, tc.next, &tc.cert_tape).row(0).transpose();
        break;
      }
      case TermKind::Lie: {
        tc.next = next_batch(*loop_, nets, X, -1, tc.ctrl_tape);
        forward_batch(*nets.cert, X, &tc.cert_tape);
        total += term.weight * jvp_batch(*nets.cert, tc.cert_tape, tc.next).row(0).transpose();
        break;
      }
      case TermKind::Exit: {
        tc.next = next_batch(*loop_, nets, X, -1, tc.ctrl_tape);
        tc.active_set.assign(static_cast<std::size_t>(n), 0);
        tc.active_row.assign(static_cast<std::size_t>(n), 0);
        for (Eigen::Index k = 0; k < n; ++k) {
          double best = std::numeric_limits<double>::infinity();
          for (std::size_t s = 0; s < term.sets.size(); ++s) {
            const auto [v, piece] = violation_piece(term.sets[s], tc.next.col(k));
            if (v < best) {
              best = v;
              tc.active_set[static_cast<std::size_t>(k)] = static_cast<int>(s);
              tc.active_row[static_cast<std::size_t>(k)] = piece;
            }
          }
          total[k] += term.weight * best;
        }
        break;
      }
      case TermKind::State:
        for (Eigen::Index k = 0; k < n; ++k) total[k] += term.weight * eval(*term.expr, X.col(k));
        break;
    }
  }
  if (!total.allFinite()) throw Error(ErrorKind::NonFiniteResult, "composite value is not finite");
  return total;
}

void CompositeFn::accumulate_gradient(const NetView& nets, const BatchCache& cache, const Vector& coeff,
                                      Vector& grad_cert, Vector* grad_ctrl) const {
  const Matrix& X = cache.points;
  const bool through_ctrl = nets.ctrl && grad_ctrl;
  for (std::size_t t = 0; t < terms_.size(); ++t) {
    const Term& term = terms_[t];
    const TermCache& tc = cache.terms[t];
    const Matrix up = term.weight * coeff.transpose();
    switch (term.kind) {
      case TermKind::Constant:
      case TermKind::State: break;
      case TermKind::Value: backward_batch(*nets.cert, tc.cert_tape, up, grad_cert); break;
      case TermKind::ValueAt:
        grad_cert += backward(*nets.cert, term.point, Vector::Constant(1, up.sum())).param_grad;
        break;
      case TermKind::Next: {
        const Matrix g = backward_batch(*nets.cert, tc.cert_tape, up, grad_cert);
        if (through_ctrl) chain_to_controller(*loop_, nets, X, tc, term.noise, g, *grad_ctrl);
        break;
      }
      case TermKind::Lie: {
        Matrix gv;
        jvp_backward_batch(*nets.cert, tc.cert_tape, up, grad_cert, nullptr, &gv);
        if (through_ctrl) chain_to_controller(*loop_, nets, X, tc, -1, gv, *grad_ctrl);
        break;
      }
      case TermKind::Exit: {
        if (!through_ctrl) break;
        const int n = loop_->system.n_state;
        Matrix g = Matrix::Zero(n, X.cols());
        for (Eigen::Index k = 0; k < X.cols(); ++k) {
          if (up(0, k) == 0.0) continue;
          const std::size_t s = static_cast<std::size_t>(tc.active_set[static_cast<std::size_t>(k)]);
          const int piece = tc.active_row[static_cast<std::size_t>(k)];
          if (piece < -n) {
            g(-1 - n - piece, k) = up(0, k);
          } else if (piece < 0) {
            g(-1 - piece, k) = -up(0, k);
          } else if (const auto& grad = exit_grads_[t][s][static_cast<std::size_t>(piece)]) {
            const Vector y = tc.next.col(k);
            for (int i = 0; i < n; ++i) g(i, k) = up(0, k) * eval((*grad)[static_cast<std::size_t>(i)], y);
          }
        }
        chain_to_controller(*loop_, nets, X, tc, -1, g, *grad_ctrl);
        break;
      }
    }
  }
}

namespace {

class Compiler {
 public:
  Compiler(const Problem& problem, const Network& cert, const Network* ctrl) : problem_(problem) {
    const System& sys = problem.system;
    if (cert.input_dim() != sys.n_state || cert.output_dim() != 1 || cert.shape().clamp) {
      throw Error(ErrorKind::MalformedProblem, "certificate must map R^" + std::to_string(sys.n_state) +
                                                   " to R with an identity output transform");
    }
    if ((ctrl != nullptr) != (sys.n_input > 0)) {
      throw Error(ErrorKind::MalformedProblem, "controller must be given exactly when the system has inputs");
    }
    if (ctrl && (ctrl->input_dim() != sys.n_state || ctrl->output_dim() != sys.n_input)) {
      throw Error(ErrorKind::MalformedProblem, "controller dimensions do not match the system");
    }
    cert_ = std::make_shared<const Network>(cert);
    if (ctrl) ctrl_ = std::make_shared<const Network>(*ctrl);
    loop_ = std::make_shared<const ClosedLoop>(sys);
  }

  std::vector<VerificationCondition> run() {
    const System& sys = problem_.system;
    const RuleParams& rp = problem_.rule_params;
    const bool continuous = sys.kind == SystemKind::ContinuousDeterministic;
    const bool stochastic = sys.kind == SystemKind::DiscreteStochastic;
    const auto mismatch = [&](const std::string& what) {
      throw Error(ErrorKind::SpecSystemMismatch, what + " on a " + to_string(sys.kind) + " system");
    };
    if (continuous && cert_->shape().has_relu()) {
      throw Error(ErrorKind::ReluNotSupported, "continuous-time rules need a differentiable certificate");
    }
    const ConstrainedSet& D = problem_.domain;

    std::visit(
        [&](const auto& spec) {
          using T = std::decay_t<decltype(spec)>;
          if constexpr (std::is_same_v<T, StabilitySpec>) {
            if (stochastic) mismatch("stability");
            const Region region{D, {ball(spec.equilibrium, spec.radius)}};
            add("stab/pos", region, {value(-1), value_at(spec.equilibrium, 1), constant(rp.mu_pos)});
            if (continuous) {
              add("stab/dec", region, {lie(1), constant(rp.mu_dec)});
            } else {
              add("stab/dec", region, {next(1), value(-1), constant(rp.mu_dec)});
            }
          } else if constexpr (std::is_same_v<T, SafetySpec>) {
            if (stochastic) mismatch("safety (use probabilistic_safety with a level)");
            add("safe/init", Region{spec.init, {}}, {value(1), constant(rp.mu_pos)});
            add("safe/unsafe", Region{spec.unsafe, {}}, {value(-1), constant(rp.mu_pos)});
            if (continuous) {
              add("safe/flow", Region{D, {}}, {lie(1), constant(rp.mu_dec)}, band_gates(rp.band));
            } else {
              add("safe/flow", Region{D, {}}, {next(1)}, {gate({value(1)})});
            }
          } else if constexpr (std::is_same_v<T, InvarianceSpec>) {
            if (stochastic) mismatch("invariance");
            add("inv/inside", Region{spec.inv, {}}, {value(1), constant(rp.mu_pos)});
            add("inv/outside", Region{D, {spec.inv}}, {value(-1), constant(rp.mu_pos)});
            if (continuous) {
              add("inv/flow", Region{D, {}}, {lie(1), constant(rp.mu_dec)}, band_gates(rp.band));
            } else {
              add("inv/step", Region{spec.inv, {}}, {next(1)});
              if (rp.check_domain_invariance) add("inv/dominv", Region{spec.inv, {}}, {exit({D})}, {}, false);
            }
          } else if constexpr (std::is_same_v<T, ReachabilitySpec>) {
            if (sys.kind != SystemKind::DiscreteDeterministic) mismatch("reachability");
            const Region region{D, {spec.target}};
            add("reach/nonneg", region, {value(-1)});
            add("reach/rank", region, {next(1), value(-1), constant(spec.decrease)});
            if (rp.check_domain_invariance) add("reach/dominv", region, {exit({D, spec.target})}, {}, false);
          } else if constexpr (std::is_same_v<T, ReachWhileAvoidSpec>) {
            if (sys.kind != SystemKind::DiscreteDeterministic) mismatch("reach-while-avoid");
            const Region region{D, {spec.target, spec.avoid}};
            add("rwa/init", Region{spec.init, {}}, {value(1)});
            add("rwa/avoid", Region{spec.avoid, {}}, {value(-1), constant(rp.mu_pos)});
            add("rwa/rank", region, {next(1), value(-1), constant(spec.decrease)}, {gate({value(1)})});
            if (rp.check_domain_invariance) {
              add("rwa/dominv", region, {exit({D, spec.target})}, {gate({value(1)})}, false);
            }
          } else if constexpr (std::is_same_v<T, ProbabilisticSafetySpec>) {
            if (!stochastic) mismatch("probabilistic safety");
            add("psafe/nonneg", Region{D, {}}, {value(-1)});
            add("psafe/level", Region{spec.unsafe, {}}, {constant(spec.level), value(-1)});
            std::vector<Term> super = expectation();
            super.push_back(value(-1));
            if (rp.drift > 0.0) super.push_back(constant(-rp.drift));
            add("psafe/super", Region{D, {spec.unsafe}}, super);
            // Near a minimum of B the condition can only hold by about the
            // drift, so a larger training margin is unreachable.
            vcs_.back().train_margin = std::min(vcs_.back().train_margin, 0.5 * rp.drift);
            if (rp.init_level) add("psafe/init", Region{spec.init, {}}, {value(1), constant(-*rp.init_level)});
          } else {
            if (!stochastic) mismatch("probabilistic reachability");
            const Region region{D, {spec.target}};
            add("preach/nonneg", region, {value(-1)});
            std::vector<Term> edec = expectation();
            edec.push_back(value(-1));
            edec.push_back(constant(spec.decrease));
            add("preach/edec", region, edec);
          }
        },
        problem_.spec);
    return std::move(vcs_);
  }

 private:
  static Term constant(double c) { return Term{TermKind::Constant, c, {}, -1, {}, {}}; }
  static Term value(double w) { return Term{TermKind::Value, w, {}, -1, {}, {}}; }
  static Term value_at(const Vector& p, double w) { return Term{TermKind::ValueAt, w, p, -1, {}, {}}; }
  static Term next(double w, int noise = -1) { return Term{TermKind::Next, w, {}, noise, {}, {}}; }
  static Term lie(double w) { return Term{TermKind::Lie, w, {}, -1, {}, {}}; }
  static Term exit(std::vector<ConstrainedSet> sets) { return Term{TermKind::Exit, 1.0, {}, -1, std::move(sets), {}}; }

  std::vector<Term> expectation() const {
    std::vector<Term> terms;
    const auto& noise = problem_.system.noise;
    for (std::size_t m = 0; m < noise.size(); ++m) terms.push_back(next(noise[m].probability, static_cast<int>(m)));
    return terms;
  }

  CompositeFn gate(std::vector<Term> terms) const { return CompositeFn(loop_, std::move(terms)); }

  std::vector<CompositeFn> band_gates(double band) const {
    return {gate({value(1), constant(-band)}), gate({value(-1), constant(-band)})};
  }

  void add(std::string id, Region region, std::vector<Term> terms, std::vector<CompositeFn> gates = {},
           bool strict = true) {
    VerificationCondition vc;
    vc.id = std::move(id);
    vc.region = std::move(region);
    vc.gates = std::move(gates);
    vc.violation = CompositeFn(loop_, std::move(terms));
    vc.strict = strict;
    vc.cert = cert_;
    vc.ctrl = ctrl_;
    vcs_.push_back(std::move(vc));
  }

  const Problem& problem_;
  std::shared_ptr<const Network> cert_;
  std::shared_ptr<const Network> ctrl_;
  std::shared_ptr<const ClosedLoop> loop_;
  std::vector<VerificationCondition> vcs_;
};

}  // namespace

std::vector<VerificationCondition> compile_rules(const Problem& problem, const Network& cert, const Network* ctrl) {
  return Compiler(problem, cert, ctrl).run();
}

VerificationCondition expression_condition(std::string id, Region region, const Expr& c) {
  System sys;
  sys.kind = SystemKind::DiscreteDeterministic;
  sys.n_state = region.set.dim();
  for (int i = 0; i < sys.n_state; ++i) sys.dynamics.push_back(Expr::var(VarKind::State, i));
  VerificationCondition vc;
  vc.id = std::move(id);
  vc.region = std::move(region);
  vc.violation = CompositeFn(std::make_shared<const ClosedLoop>(std::move(sys)),
                             {Term{TermKind::State, 1.0, {}, -1, {}, c}});
  return vc;
}

bool gates_hold(const VerificationCondition& vc, const NetView& nets, const Vector& x) {
  for (const auto& g : vc.gates) {
    if (!(g.value(nets, x) <= 0.0)) return false;
  }
  return true;
}

bool vc_member(const VerificationCondition& vc, const Vector& x) {
  return region_membership(vc.region, x) && gates_hold(vc, vc.nets(), x);
}

double vc_violation(const VerificationCondition& vc, const Vector& x) {
  if (!vc_member(vc, x)) throw Error(ErrorKind::PointOutsideRegion, "point is outside the region of " + vc.id);
  return vc.violation.value(vc.nets(), x);
}

Interval vc_interval(const VerificationCondition& vc, const Box& b) { return vc.violation.enclose(vc.nets(), b); }

}  // namespace certsynth
