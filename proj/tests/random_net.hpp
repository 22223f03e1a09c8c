#pragma once

// Random networks and finite-difference oracles for the gradient tests.

#include <random>

#include "certsynth/net.hpp"

namespace certsynth::testing {

inline Vector random_vector(std::mt19937_64& rng, Eigen::Index n, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Vector v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline Network random_network(std::mt19937_64& rng, Activation act, bool scalar_output = false) {
  NetworkShape shape;
  shape.input_dim = std::uniform_int_distribution<int>(1, 3)(rng);
  const int depth = std::uniform_int_distribution<int>(1, 2)(rng);
  for (int l = 0; l < depth; ++l) shape.hidden.push_back({std::uniform_int_distribution<int>(1, 5)(rng), act});
  shape.output_dim = scalar_output ? 1 : std::uniform_int_distribution<int>(1, 2)(rng);
  Network net = init_network(shape, rng());
  // Nonzero biases exercise every parameter.
  Vector p = net.parameters();
  p += random_vector(rng, p.size(), 0.3);
  net.set_parameters(p);
  return net;
}

inline bool near_relu_kink(const Network& net, const Vector& x, double tol) {
  BatchTape tape;
  forward_batch(net, x, &tape);
  for (std::size_t l = 0; l + 1 < tape.pre.size(); ++l) {
    if ((tape.pre[l].array().abs() < tol).any()) return true;
  }
  return false;
}

// |a - b| scaled by max(1, |a|, |b|), maximized over components.
inline double max_rel_error(const Vector& a, const Vector& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double scale = std::max({1.0, std::fabs(a[i]), std::fabs(b[i])});
    worst = std::max(worst, std::fabs(a[i] - b[i]) / scale);
  }
  return worst;
}

template <class F>
Vector fd_input(F&& f, const Network& net, const Vector& x, double h = 1e-5) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(net, xp) - f(net, xm)) / (2 * h);
  }
  return g;
}

template <class F>
Vector fd_params(F&& f, const Network& net, const Vector& x, double h = 1e-5) {
  const Vector p = net.parameters();
  Vector g(p.size());
  Network probe = net;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    Vector pp = p, pm = p;
    pp[i] += h;
    pm[i] -= h;
    probe.set_parameters(pp);
    const double fp = f(probe, x);
    probe.set_parameters(pm);
    const double fm = f(probe, x);
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

}  // namespace certsynth::testing
