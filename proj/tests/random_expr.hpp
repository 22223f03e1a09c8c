#pragma once

// Hand-rolled generators shared by the property tests.

#include <random>

#include "certsynth/expr.hpp"

namespace certsynth::testing {

// Random expression over n_state state variables. When smooth is set the
// tree avoids abs/min/max so it can be differentiated. Division is always by
// exp(.) or a positive offset square so the denominator never hits zero.
inline Expr random_expr(std::mt19937_64& rng, int n_state, int depth, bool smooth) {
  std::uniform_int_distribution<int> leaf_pick(0, 2);
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  if (depth <= 0) {
    if (leaf_pick(rng) == 0) return Expr::constant(coef(rng));
    return Expr::var(VarKind::State, std::uniform_int_distribution<int>(0, n_state - 1)(rng));
  }
  const int choices = smooth ? 10 : 13;
  const int pick = std::uniform_int_distribution<int>(0, choices - 1)(rng);
  const auto sub = [&] { return random_expr(rng, n_state, depth - 1, smooth); };
  switch (pick) {
    case 0: return Expr::binary(Op::Add, sub(), sub());
    case 1: return Expr::binary(Op::Sub, sub(), sub());
    case 2: return Expr::binary(Op::Mul, sub(), sub());
    case 3: return Expr::binary(Op::Div, sub(), Expr::unary(Op::Exp, sub()));
    case 4: return Expr::binary(Op::Div, sub(), Expr::binary(Op::Add, Expr::constant(1.5), Expr::pow(sub(), 2)));
    case 5: return Expr::unary(Op::Neg, sub());
    case 6: return Expr::pow(sub(), std::uniform_int_distribution<int>(0, 4)(rng));
    case 7: return Expr::unary(Op::Sin, sub());
    case 8: return Expr::unary(Op::Cos, sub());
    case 9: return Expr::unary(Op::Tanh, sub());
    case 10: return Expr::unary(Op::Abs, sub());
    case 11: return Expr::binary(Op::Min, sub(), sub());
    default: return Expr::binary(Op::Max, sub(), sub());
  }
}

inline Box random_box(std::mt19937_64& rng, int dim, double extent = 2.0) {
  std::uniform_real_distribution<double> center(-extent, extent);
  std::uniform_real_distribution<double> half(0.0, 0.5 * extent);
  Box b(dim);
  for (int i = 0; i < dim; ++i) {
    const double c = center(rng);
    const double h = half(rng);
    b[i] = Interval(c - h, c + h);
  }
  return b;
}

inline Vector random_point_in(std::mt19937_64& rng, const Box& b) {
  Vector x(b.size());
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    x[i] = std::uniform_real_distribution<double>(b[i].lo(), b[i].hi())(rng);
    if (x[i] > b[i].hi()) x[i] = b[i].hi();
  }
  return x;
}

}  // namespace certsynth::testing
