#include "certsynth/interval.hpp"

#include <ostream>

namespace certsynth {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_finite(double lo, double hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) {
    throw Error(ErrorKind::NonFiniteBound, "interval bound is not finite");
  }
}

// |x|^p for a point x, enclosed by squaring on nonnegative intervals.
Interval abs_pow(double x, int p) {
  Interval base(std::fabs(x));
  Interval result(1.0);
  while (p > 0) {
    if (p & 1) result = result * base;
    p >>= 1;
    if (p > 0) base = base * base;
  }
  return result;
}

// Outward-rounded enclosure of a signed point power.
Interval point_pow(double x, int p) {
  const Interval m = abs_pow(x, p);
  return (x < 0.0 && (p % 2 == 1)) ? -m : m;
}

bool contains_critical(const Interval& a, double offset) {
  // Is there an integer k with offset + 2 pi k in [lo, hi]? Widened slightly
  // so that floating-point error in the period arithmetic can only add
  // extrema, never drop them.
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double tol = 1e-12 * std::max(1.0, a.mag());
  const double k = std::ceil((a.lo() - tol - offset) / two_pi);
  return offset + two_pi * k <= a.hi() + tol;
}

}  // namespace

double round_down(double x, int ulps) {
  for (int i = 0; i < ulps; ++i) x = std::nextafter(x, -kInf);
  return x;
}

double round_up(double x, int ulps) {
  for (int i = 0; i < ulps; ++i) x = std::nextafter(x, kInf);
  return x;
}

Interval::Interval(double lo, double hi) : lo_(lo), hi_(hi) {
  if (std::isnan(lo) || std::isnan(hi)) throw Error(ErrorKind::NonFiniteBound, "NaN interval bound");
  if (lo > hi) throw Error(ErrorKind::PreconditionViolated, "interval with lo > hi");
}

Interval Interval::outward(double lo, double hi) {
  require_finite(lo, hi);
  return Interval(round_down(lo), round_up(hi));
}

double Interval::mig() const {
  if (contains_zero()) return 0.0;
  return std::min(std::fabs(lo_), std::fabs(hi_));
}

// Error-free transforms: a result that is exact needs no padding, which keeps
// bounds that land exactly on a set boundary from drifting past it.
bool sum_is_exact(double a, double b, double s) {
  const double bb = s - a;
  return (a - (s - bb)) + (b - bb) == 0.0;
}

bool product_is_exact(double a, double b, double p) {
  if (p != 0.0 && std::fabs(p) < 1e-290) return false;  // fma residual may underflow
  if (p == 0.0) return a == 0.0 || b == 0.0;
  return std::fma(a, b, -p) == 0.0;
}

Interval& Interval::operator+=(const Interval& o) { return *this = *this + o; }
Interval& Interval::operator-=(const Interval& o) { return *this = *this - o; }
Interval& Interval::operator*=(const Interval& o) { return *this = *this * o; }
Interval& Interval::operator/=(const Interval& o) { return *this = *this / o; }

namespace {

double sum_down(double a, double b) {
  const double s = a + b;
  require_finite(s, s);
  return sum_is_exact(a, b, s) ? s : round_down(s);
}

double sum_up(double a, double b) {
  const double s = a + b;
  require_finite(s, s);
  return sum_is_exact(a, b, s) ? s : round_up(s);
}

double product_down(double a, double b) {
  const double p = a * b;
  require_finite(p, p);
  return product_is_exact(a, b, p) ? p : round_down(p);
}

double product_up(double a, double b) {
  const double p = a * b;
  require_finite(p, p);
  return product_is_exact(a, b, p) ? p : round_up(p);
}

}  // namespace

Interval operator+(const Interval& a, const Interval& b) {
  return Interval(sum_down(a.lo(), b.lo()), sum_up(a.hi(), b.hi()));
}

Interval operator-(const Interval& a, const Interval& b) {
  return Interval(sum_down(a.lo(), -b.hi()), sum_up(a.hi(), -b.lo()));
}

Interval operator-(const Interval& a) { return Interval(-a.hi(), -a.lo()); }

Interval operator*(const Interval& a, const Interval& b) {
  const double lo = std::min({product_down(a.lo(), b.lo()), product_down(a.lo(), b.hi()),
                              product_down(a.hi(), b.lo()), product_down(a.hi(), b.hi())});
  const double hi = std::max({product_up(a.lo(), b.lo()), product_up(a.lo(), b.hi()),
                              product_up(a.hi(), b.lo()), product_up(a.hi(), b.hi())});
  return Interval(lo, hi);
}

Interval operator/(const Interval& a, const Interval& b) {
  if (b.contains_zero()) {
    throw Error(ErrorKind::IntervalDivisionByZero, "denominator interval contains zero");
  }
  const Interval recip = Interval::outward(1.0 / b.hi(), 1.0 / b.lo());
  return a * recip;
}

Interval exp(const Interval& a) { return Interval::outward(std::exp(a.lo()), std::exp(a.hi())); }

Interval tanh(const Interval& a) {
  const Interval r = Interval::outward(std::tanh(a.lo()), std::tanh(a.hi()));
  return Interval(std::max(r.lo(), -1.0), std::min(r.hi(), 1.0));
}

Interval sin(const Interval& a) {
  if (a.width() >= 2.0 * std::numbers::pi) return Interval(-1.0, 1.0);
  const double s1 = std::sin(a.lo());
  const double s2 = std::sin(a.hi());
  double lo = round_down(std::min(s1, s2));
  double hi = round_up(std::max(s1, s2));
  if (contains_critical(a, 0.5 * std::numbers::pi)) hi = 1.0;
  if (contains_critical(a, -0.5 * std::numbers::pi)) lo = -1.0;
  return Interval(std::max(lo, -1.0), std::min(hi, 1.0));
}

Interval cos(const Interval& a) {
  if (a.width() >= 2.0 * std::numbers::pi) return Interval(-1.0, 1.0);
  const double c1 = std::cos(a.lo());
  const double c2 = std::cos(a.hi());
  double lo = round_down(std::min(c1, c2));
  double hi = round_up(std::max(c1, c2));
  if (contains_critical(a, 0.0)) hi = 1.0;
  if (contains_critical(a, std::numbers::pi)) lo = -1.0;
  return Interval(std::max(lo, -1.0), std::min(hi, 1.0));
}

Interval abs(const Interval& a) {
  if (a.lo() >= 0.0) return a;
  if (a.hi() <= 0.0) return -a;
  return Interval(0.0, a.mag());
}

Interval min(const Interval& a, const Interval& b) {
  return Interval(std::min(a.lo(), b.lo()), std::min(a.hi(), b.hi()));
}

Interval max(const Interval& a, const Interval& b) {
  return Interval(std::max(a.lo(), b.lo()), std::max(a.hi(), b.hi()));
}

Interval pow_int(const Interval& a, int exponent) {
  if (exponent < 0) throw Error(ErrorKind::PreconditionViolated, "negative integer exponent");
  if (exponent == 0) return Interval(1.0);
  if (exponent == 1) return a;
  if (exponent % 2 == 1) {
    return Interval(point_pow(a.lo(), exponent).lo(), point_pow(a.hi(), exponent).hi());
  }
  const double lo = a.contains_zero() ? 0.0 : abs_pow(a.mig(), exponent).lo();
  return Interval(std::max(lo, 0.0), abs_pow(a.mag(), exponent).hi());
}

Interval square(const Interval& a) { return pow_int(a, 2); }

Interval relu(const Interval& a) { return Interval(std::max(a.lo(), 0.0), std::max(a.hi(), 0.0)); }

Interval tanh_derivative(const Interval& a) {
  // 1 - tanh^2 is even and decreasing in |t|: extremes sit at mig and mag.
  const Interval near = Interval(1.0) - square(tanh(Interval(a.mig())));
  const Interval far = Interval(1.0) - square(tanh(Interval(a.mag())));
  return Interval(std::max(far.lo(), 0.0), std::min(near.hi(), 1.0));
}

Interval hull(const Interval& a, const Interval& b) {
  return Interval(std::min(a.lo(), b.lo()), std::max(a.hi(), b.hi()));
}

Interval intersect(const Interval& a, const Interval& b) {
  return Interval(std::max(a.lo(), b.lo()), std::min(a.hi(), b.hi()));
}

std::ostream& operator<<(std::ostream& os, const Interval& x) {
  return os << '[' << x.lo() << ", " << x.hi() << ']';
}

Box make_box(const Vector& lo, const Vector& hi) {
  if (lo.size() != hi.size()) throw Error(ErrorKind::PreconditionViolated, "box bound size mismatch");
  Box b(lo.size());
  for (Eigen::Index i = 0; i < lo.size(); ++i) b[i] = Interval(lo[i], hi[i]);
  return b;
}

Box point_box(const Vector& x) { return make_box(x, x); }

Vector box_lo(const Box& b) { return b.unaryExpr([](const Interval& v) { return v.lo(); }); }
Vector box_hi(const Box& b) { return b.unaryExpr([](const Interval& v) { return v.hi(); }); }
Vector box_mid(const Box& b) { return b.unaryExpr([](const Interval& v) { return v.mid(); }); }
Vector box_widths(const Box& b) { return b.unaryExpr([](const Interval& v) { return v.width(); }); }

bool box_contains(const Box& b, const Vector& x) {
  if (b.size() != x.size()) return false;
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    if (!b[i].contains(x[i])) return false;
  }
  return true;
}

bool box_subset(const Box& inner, const Box& outer) {
  for (Eigen::Index i = 0; i < inner.size(); ++i) {
    if (!inner[i].subset_of(outer[i])) return false;
  }
  return true;
}

bool box_intersects(const Box& a, const Box& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i].hi() < b[i].lo() || b[i].hi() < a[i].lo()) return false;
  }
  return true;
}

Eigen::Index widest_dimension(const Box& b) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < b.size(); ++i) {
    if (b[i].width() > b[best].width()) best = i;
  }
  return best;
}

std::pair<Box, Box> bisect(const Box& b, Eigen::Index dim) {
  Box left = b;
  Box right = b;
  const double m = b[dim].mid();
  left[dim] = Interval(b[dim].lo(), m);
  right[dim] = Interval(m, b[dim].hi());
  return {left, right};
}

}  // namespace certsynth
