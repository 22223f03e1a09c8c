#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "certsynth/interval.hpp"

namespace certsynth {

enum class Op {
  Const,
  StateVar,
  InputVar,
  NoiseVar,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  PowInt,
  Exp,
  Sin,
  Cos,
  Tanh,
  Abs,
  Min,
  Max,
};

enum class VarKind { State, Input, Noise };

// Declared variable counts an expression is validated against.
struct Dims {
  int n_state = 0;
  int n_input = 0;
  int n_noise = 0;
};

// Immutable expression tree over state (x), input (u) and noise (w)
// variables. Copies share structure.
class Expr {
 public:
  struct Node;

  Expr();  // the constant 0

  // exact: the value is the number meant, not a rounding of it.
  static Expr constant(double value, bool exact = false);
  static Expr var(VarKind kind, int index);
  static Expr unary(Op op, Expr arg);
  static Expr binary(Op op, Expr lhs, Expr rhs);
  static Expr pow(Expr base, int exponent);

  Op op() const;
  double value() const;     // Const only
  bool exact() const;       // Const only
  int index() const;        // variables only
  int exponent() const;     // PowInt only
  const Expr& lhs() const;  // first operand of unary/binary/PowInt nodes
  const Expr& rhs() const;  // second operand of binary nodes

  bool is_constant() const { return op() == Op::Const; }
  bool depends_on(VarKind kind, int index) const;
  bool uses(VarKind kind) const;
  // Largest variable index of the given kind plus one (0 if absent).
  int required_dim(VarKind kind) const;

  friend bool operator==(const Expr& a, const Expr& b);

 private:
  explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

struct Expr::Node {
  Op op = Op::Const;
  double value = 0.0;
  bool exact = false;
  int index = 0;
  int exponent = 0;
  std::vector<Expr> args;
};

// Builders with constant folding of literal subtrees and the exact
// identities x+0, x*1, x*0. Used by differentiation and rule assembly.
Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);

// Parses the textual grammar; variables are written 1-based (x1, u1, w1).
// Unary minus binds tighter than '^', so "-x1^2" reads as (-x1)^2.
Expr parse_expr(std::string_view text, const Dims& dims);

// Exact decimal expansion of a finite nonnegative double, "digits.digits".
std::string exact_decimal(double v);

// Canonical text that parses back to a structurally equal tree.
std::string to_string(const Expr& e);

// Throws IndexOutOfRange if any variable exceeds dims.
void validate(const Expr& e, const Dims& dims);

namespace detail {

template <class Scalar>
Scalar literal(double c, bool exact);
template <>
inline double literal<double>(double c, bool) { return c; }
// Inexact literals were rounded on parse; pad so the enclosure covers the
// written value.
template <>
inline Interval literal<Interval>(double c, bool exact) { return exact ? Interval(c) : Interval::outward(c, c); }

double divide(double num, double den);
Interval divide(const Interval& num, const Interval& den);
void require_finite(double v);
void require_finite(const Interval& v);

}  // namespace detail

// Evaluates with double (IEEE) or Interval (outward-rounded enclosure)
// semantics. Interval evaluation is inclusion isotonic.
template <class Scalar>
Scalar evaluate(const Expr& e, const VectorX<Scalar>& x, const VectorX<Scalar>& u, const VectorX<Scalar>& w) {
  const auto rec = [&](const Expr& s) { return evaluate<Scalar>(s, x, u, w); };
  using std::cos;
  using std::exp;
  using std::sin;
  using std::tanh;
  Scalar r{};
  switch (e.op()) {
    case Op::Const: return detail::literal<Scalar>(e.value(), e.exact());
    case Op::StateVar: return x[e.index()];
    case Op::InputVar: return u[e.index()];
    case Op::NoiseVar: return w[e.index()];
    case Op::Add: r = rec(e.lhs()) + rec(e.rhs()); break;
    case Op::Sub: r = rec(e.lhs()) - rec(e.rhs()); break;
    case Op::Mul: r = rec(e.lhs()) * rec(e.rhs()); break;
    case Op::Div: r = detail::divide(rec(e.lhs()), rec(e.rhs())); break;
    case Op::Neg: r = -rec(e.lhs()); break;
    case Op::PowInt: {
      if constexpr (std::is_same_v<Scalar, double>) {
        r = std::pow(rec(e.lhs()), e.exponent());
      } else {
        r = pow_int(rec(e.lhs()), e.exponent());
      }
      break;
    }
    case Op::Exp: r = exp(rec(e.lhs())); break;
    case Op::Sin: r = sin(rec(e.lhs())); break;
    case Op::Cos: r = cos(rec(e.lhs())); break;
    case Op::Tanh: r = tanh(rec(e.lhs())); break;
    case Op::Abs: {
      if constexpr (std::is_same_v<Scalar, double>) {
        r = std::fabs(rec(e.lhs()));
      } else {
        r = abs(rec(e.lhs()));
      }
      break;
    }
    case Op::Min: {
      using std::min;
      r = min(rec(e.lhs()), rec(e.rhs()));
      break;
    }
    case Op::Max: {
      using std::max;
      r = max(rec(e.lhs()), rec(e.rhs()));
      break;
    }
  }
  detail::require_finite(r);
  return r;
}

double eval(const Expr& e, const Vector& x, const Vector& u = {}, const Vector& w = {});
Interval interval_eval(const Expr& e, const Box& bx, const Box& bu = {}, const Box& bw = {});

// Symbolic partial derivative. Abs/Min/Max on a path that depends on the
// variable raise NonDifferentiableNode.
Expr differentiate(const Expr& e, VarKind kind, int index);
inline Expr differentiate(const Expr& e, int state_index) {
  return differentiate(e, VarKind::State, state_index);
}

}  // namespace certsynth
