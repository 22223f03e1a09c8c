#pragma once

#include <algorithm>
#include <cmath>
#include <iosfwd>
#include <limits>
#include <numbers>

#include <Eigen/Core>

#include "certsynth/error.hpp"

namespace certsynth {

// Closed real interval with outward-padded arithmetic. Every operation that
// rounds pads its result by kPadUlps units in the last place on each side
// (sums and products detected as exact are left unpadded), so
// the returned enclosure contains the exact real result for any arguments
// drawn from the operand intervals.
class Interval {
 public:
  static constexpr int kPadUlps = 4;

  constexpr Interval() = default;
  // Exact point interval; no padding (the double is taken at face value).
  constexpr Interval(double v) : lo_(v), hi_(v) {}  // NOLINT(google-explicit-constructor)
  Interval(double lo, double hi);

  // Enclosure of [lo, hi] after padding each bound outward.
  static Interval outward(double lo, double hi);
  static Interval hull(double a, double b) { return outward(std::min(a, b), std::max(a, b)); }

  double lo() const { return lo_; }
  double hi() const { return hi_; }
  double mid() const { return 0.5 * lo_ + 0.5 * hi_; }
  double width() const { return hi_ - lo_; }
  double mag() const { return std::max(std::fabs(lo_), std::fabs(hi_)); }
  // Smallest |x| over the interval.
  double mig() const;

  bool contains(double x) const { return lo_ <= x && x <= hi_; }
  bool contains_zero() const { return lo_ <= 0.0 && 0.0 <= hi_; }
  bool subset_of(const Interval& other) const { return other.lo_ <= lo_ && hi_ <= other.hi_; }
  bool is_point() const { return lo_ == hi_; }

  Interval& operator+=(const Interval& o);
  Interval& operator-=(const Interval& o);
  Interval& operator*=(const Interval& o);
  Interval& operator/=(const Interval& o);

  friend bool operator==(const Interval& a, const Interval& b) = default;

 private:
  double lo_ = 0.0;
  double hi_ = 0.0;
};

double round_down(double x, int ulps = Interval::kPadUlps);
double round_up(double x, int ulps = Interval::kPadUlps);

Interval operator+(const Interval& a, const Interval& b);
Interval operator-(const Interval& a, const Interval& b);
Interval operator-(const Interval& a);
Interval operator*(const Interval& a, const Interval& b);
// Throws IntervalDivisionByZero when the denominator contains zero.
Interval operator/(const Interval& a, const Interval& b);

Interval exp(const Interval& a);
Interval tanh(const Interval& a);
Interval sin(const Interval& a);
Interval cos(const Interval& a);
Interval abs(const Interval& a);
Interval min(const Interval& a, const Interval& b);
Interval max(const Interval& a, const Interval& b);
Interval pow_int(const Interval& a, int exponent);
Interval square(const Interval& a);
Interval relu(const Interval& a);
// Enclosure of 1 - tanh(t)^2 for t ranging over a.
Interval tanh_derivative(const Interval& a);

Interval hull(const Interval& a, const Interval& b);
// Intersection; caller guarantees the intervals overlap.
Interval intersect(const Interval& a, const Interval& b);

std::ostream& operator<<(std::ostream& os, const Interval& x);

// Point-scalar overloads so templated code can call the same names for
// double and Interval.
inline double square(double x) { return x * x; }
inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline double tanh_derivative(double x) {
  const double t = std::tanh(x);
  return 1.0 - t * t;
}
inline double tanh_second_derivative(double x) {
  const double t = std::tanh(x);
  return -2.0 * t * (1.0 - t * t);
}

template <class Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <class Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IntervalVector = VectorX<Interval>;
using IntervalMatrix = MatrixX<Interval>;

// An axis-aligned box is a vector of intervals, one per dimension.
using Box = IntervalVector;

// Whether s = fl(a + b) and p = fl(a * b) are the exact results.
bool sum_is_exact(double a, double b, double s);
bool product_is_exact(double a, double b, double p);

Box make_box(const Vector& lo, const Vector& hi);
Box point_box(const Vector& x);
Vector box_lo(const Box& b);
Vector box_hi(const Box& b);
Vector box_mid(const Box& b);
Vector box_widths(const Box& b);
bool box_contains(const Box& b, const Vector& x);
bool box_subset(const Box& inner, const Box& outer);
bool box_intersects(const Box& a, const Box& b);
// Dimension with the largest width; ties go to the lowest index.
Eigen::Index widest_dimension(const Box& b);
std::pair<Box, Box> bisect(const Box& b, Eigen::Index dim);

}  // namespace certsynth

namespace Eigen {

template <>
struct NumTraits<certsynth::Interval> : GenericNumTraits<double> {
  using Real = certsynth::Interval;
  using NonInteger = certsynth::Interval;
  using Nested = certsynth::Interval;
  using Literal = certsynth::Interval;

  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 2,
    AddCost = 20,
    MulCost = 40,
  };

  static inline Real epsilon() { return Real(std::numeric_limits<double>::epsilon()); }
  static inline Real dummy_precision() { return Real(1e-12); }
  static inline int digits10() { return std::numeric_limits<double>::digits10; }
};

}  // namespace Eigen
