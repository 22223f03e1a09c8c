#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "certsynth/model.hpp"

namespace certsynth {

// Non-owning view of the networks a composite function is evaluated with.
struct NetView {
  const Network* cert = nullptr;
  const Network* ctrl = nullptr;
};

// Closed-loop dynamics shared by every term: the system plus the partial
// derivatives of the dynamics with respect to the inputs (for controller
// gradients).
struct ClosedLoop {
  System system;
  std::vector<std::vector<Expr>> df_du;  // [state i][input j], empty without inputs

  explicit ClosedLoop(System sys);
};

enum class TermKind {
  Constant,  // weight
  Value,     // weight * V(x)
  ValueAt,   // weight * V(point), constant in x
  Next,      // weight * V(f(x, g(x), w_m)); noise = -1 for deterministic maps
  Lie,       // weight * grad V(x) . f(x, g(x))
  Exit,      // weight * min over sets S of dist-like violation of f(x, g(x)) in S
  State,     // weight * e(x) for a state expression e
};

struct Term {
  TermKind kind = TermKind::Constant;
  double weight = 1.0;
  Vector point;                     // ValueAt
  int noise = -1;                   // Next
  std::vector<ConstrainedSet> sets;  // Exit
  std::optional<Expr> expr;         // State
};

struct TermCache {
  BatchTape cert_tape;
  BatchTape ctrl_tape;
  Matrix next;                  // f-hat at each column
  std::vector<int> active_set;  // Exit: minimizing set per column
  std::vector<int> active_row;  // Exit: maximizing piece per column (-1-i for faces)
};

struct BatchCache {
  Matrix points;
  std::vector<TermCache> terms;
};

// Scalar map c(x) assembled as a weighted sum of terms.
class CompositeFn {
 public:
  CompositeFn() = default;
  CompositeFn(std::shared_ptr<const ClosedLoop> loop, std::vector<Term> terms);

  const std::vector<Term>& terms() const { return terms_; }
  const ClosedLoop& loop() const { return *loop_; }

  double value(const NetView& nets, const Vector& x) const;
  Interval enclose(const NetView& nets, const Box& b) const;

  // Values at the columns of X; the cache feeds accumulate_gradient.
  Vector values(const NetView& nets, const Matrix& X, BatchCache* cache = nullptr) const;
  // Adds sum_k coeff_k * d c(x_k) / d(parameters) to the gradients. grad_ctrl
  // may be null when there is no controller.
  void accumulate_gradient(const NetView& nets, const BatchCache& cache, const Vector& coeff, Vector& grad_cert,
                           Vector* grad_ctrl) const;

 private:
  std::shared_ptr<const ClosedLoop> loop_;
  std::vector<Term> terms_;
  // Exit terms: per set, per constraint, gradient expressions (empty when not differentiable).
  std::vector<std::vector<std::vector<std::optional<std::vector<Expr>>>>> exit_grads_;
};

// Violation of y in a constrained set: max over box faces and constraints.
// Nonpositive iff y is a member.
double set_violation(const ConstrainedSet& s, const Vector& y);
Interval set_violation(const ConstrainedSet& s, const IntervalVector& y);

struct VerificationCondition {
  std::string id;
  Region region;
  // Extra membership conditions gate(x) <= 0 that depend on the networks
  // (sublevel sets, barrier bands).
  std::vector<CompositeFn> gates;
  CompositeFn violation;
  // Strict: violation(x) < 0 required. Non-strict (closed-set membership of
  // the successor): violation(x) <= 0 suffices.
  bool strict = true;
  double train_margin = 0.01;
  std::shared_ptr<const Network> cert;
  std::shared_ptr<const Network> ctrl;

  NetView nets() const { return NetView{cert.get(), ctrl.get()}; }
};

std::vector<VerificationCondition> compile_rules(const Problem& problem, const Network& cert,
                                                 const Network* ctrl);

// Condition "c(x) < 0 on region" for a plain state expression c; no networks.
VerificationCondition expression_condition(std::string id, Region region, const Expr& c);

// Region membership including the gates.
bool vc_member(const VerificationCondition& vc, const Vector& x);
// Gates evaluated with the given networks (used by the Learner during training).
bool gates_hold(const VerificationCondition& vc, const NetView& nets, const Vector& x);

// Throws PointOutsideRegion if x is not a member.
double vc_violation(const VerificationCondition& vc, const Vector& x);
Interval vc_interval(const VerificationCondition& vc, const Box& b);
// Whether a violation value witnesses failure of the condition.
inline bool is_violating(const VerificationCondition& vc, double v) { return vc.strict ? v >= 0.0 : v > 0.0; }

}  // namespace certsynth
