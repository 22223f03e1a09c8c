#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "certsynth/interval.hpp"

namespace certsynth {

enum class Activation { Identity, Tanh, Relu, Square };

std::string to_string(Activation a);
Activation parse_activation(const std::string& name);

struct HiddenLayer {
  int width = 1;
  Activation activation = Activation::Tanh;

  friend bool operator==(const HiddenLayer&, const HiddenLayer&) = default;
};

struct NetworkShape {
  int input_dim = 1;
  std::vector<HiddenLayer> hidden;
  int output_dim = 1;
  // Present for controllers: output j is mapped through
  // center_j + halfwidth_j * tanh(.) into this box.
  std::optional<Box> clamp;

  bool has_relu() const;
  void validate() const;

  friend bool operator==(const NetworkShape& a, const NetworkShape& b);
};

struct Layer {
  Matrix weight;  // out x in
  Vector bias;
};

// Fully connected network. Layer l maps z_{l-1} to act_l(W_l z_{l-1} + b_l);
// the last layer is affine, followed by the optional clamp transform.
class Network {
 public:
  Network(NetworkShape shape, std::vector<Layer> layers);

  const NetworkShape& shape() const { return shape_; }
  const std::vector<Layer>& layers() const { return layers_; }
  int input_dim() const { return shape_.input_dim; }
  int output_dim() const { return shape_.output_dim; }

  // Activation applied after layer l (Identity for the output layer).
  Activation activation(std::size_t l) const {
    return l < shape_.hidden.size() ? shape_.hidden[l].activation : Activation::Identity;
  }

  // Flat parameter vector, layer-major: W_l (column-major) then b_l.
  Eigen::Index parameter_count() const;
  Vector parameters() const;
  void set_parameters(const Vector& flat);

  friend bool operator==(const Network& a, const Network& b);

 private:
  NetworkShape shape_;
  std::vector<Layer> layers_;
};

// Glorot-uniform weights, zero biases; bit-reproducible for a given seed.
Network init_network(const NetworkShape& shape, std::uint64_t seed);

namespace detail {

inline double activate(Activation a, double z) {
  switch (a) {
    case Activation::Tanh: return std::tanh(z);
    case Activation::Relu: return relu(z);
    case Activation::Square: return z * z;
    case Activation::Identity: break;
  }
  return z;
}

inline Interval activate(Activation a, const Interval& z) {
  switch (a) {
    case Activation::Tanh: return tanh(z);
    case Activation::Relu: return relu(z);
    case Activation::Square: return square(z);
    case Activation::Identity: break;
  }
  return z;
}

// First derivative of the activation; relu'(0) is taken as 0.
inline double activation_slope(Activation a, double z) {
  switch (a) {
    case Activation::Tanh: return tanh_derivative(z);
    case Activation::Relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::Square: return 2.0 * z;
    case Activation::Identity: break;
  }
  return 1.0;
}

Interval activation_slope(Activation a, const Interval& z);

double clamp_output(double center, double halfwidth, double z);
Interval clamp_output(const Interval& target, const Interval& z);

void require_finite(const Vector& v);
void require_finite(const IntervalVector& v);

}  // namespace detail

template <class Scalar>
VectorX<Scalar> forward(const Network& net, const VectorX<Scalar>& x) {
  if (x.size() != net.input_dim()) throw Error(ErrorKind::PreconditionViolated, "network input dimension mismatch");
  VectorX<Scalar> z = x;
  const auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    VectorX<Scalar> a = layers[l].weight.template cast<Scalar>() * z + layers[l].bias.template cast<Scalar>();
    const Activation act = net.activation(l);
    z = a.unaryExpr([act](const Scalar& v) { return detail::activate(act, v); });
  }
  if (const auto& target = net.shape().clamp) {
    for (Eigen::Index j = 0; j < z.size(); ++j) {
      if constexpr (std::is_same_v<Scalar, double>) {
        z[j] = detail::clamp_output((*target)[j].mid(), 0.5 * (*target)[j].width(), z[j]);
      } else {
        z[j] = detail::clamp_output((*target)[j], z[j]);
      }
    }
  }
  detail::require_finite(z);
  return z;
}

// Value and Jacobian w.r.t. the input, carried through the layers in
// forward mode. With Interval scalars this encloses the Jacobian over a box.
template <class Scalar>
MatrixX<Scalar> input_jacobian(const Network& net, const VectorX<Scalar>& x) {
  if (net.shape().has_relu()) throw Error(ErrorKind::ReluNotSupported, "input gradient of a relu network");
  const Eigen::Index n = net.input_dim();
  VectorX<Scalar> z = x;
  MatrixX<Scalar> jac = MatrixX<Scalar>::Identity(n, n);
  const auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const MatrixX<Scalar> w = layers[l].weight.template cast<Scalar>();
    const VectorX<Scalar> a = w * z + layers[l].bias.template cast<Scalar>();
    const MatrixX<Scalar> pre = w * jac;
    const Activation act = net.activation(l);
    z = a.unaryExpr([act](const Scalar& v) { return detail::activate(act, v); });
    jac = pre;
    for (Eigen::Index r = 0; r < a.size(); ++r) {
      const Scalar slope = detail::activation_slope(act, a[r]);
      for (Eigen::Index c = 0; c < n; ++c) jac(r, c) = slope * pre(r, c);
    }
    if (l + 1 == layers.size() && net.shape().clamp) {
      const Box& target = *net.shape().clamp;
      for (Eigen::Index r = 0; r < a.size(); ++r) {
        const Scalar slope = Scalar(0.5 * target[r].width()) * tanh_derivative(a[r]);
        for (Eigen::Index c = 0; c < n; ++c) jac(r, c) = slope * jac(r, c);
      }
    }
  }
  return jac;
}

struct BackwardResult {
  Vector input_grad;
  Vector param_grad;  // same layout as Network::parameters()
};

// Reverse-mode derivatives of upstream^T forward(net, x).
BackwardResult backward(const Network& net, const Vector& x, const Vector& upstream);

IntervalVector interval_forward(const Network& net, const Box& b);
// Enclosure of the input gradient of a scalar network over a box.
IntervalVector interval_input_gradient(const Network& net, const Box& b);
Vector input_gradient(const Network& net, const Vector& x);

// Column-batched evaluation used by the learner. Each column of X is a point.
struct BatchTape {
  std::vector<Matrix> pre;   // pre-activations per layer
  std::vector<Matrix> post;  // post[0] = X, post[l+1] = act(pre[l])
  std::vector<Matrix> tangent;  // filled by jvp_batch: tangent[0] = V
};

Matrix forward_batch(const Network& net, const Matrix& X, BatchTape* tape = nullptr);
// Accumulates sum over columns of d(upstream_col^T out_col)/dparams into
// param_grad and returns the per-column input gradients.
Matrix backward_batch(const Network& net, const BatchTape& tape, const Matrix& upstream, Vector& param_grad);
// Directional derivatives J(x_col) v_col, one per column. Requires a tape
// from forward_batch on the same points.
Matrix jvp_batch(const Network& net, BatchTape& tape, const Matrix& V);
// Reverse pass through jvp_batch: accumulates parameter gradients of
// sum_col upstream_col^T J(x_col) v_col and optionally returns the
// gradients w.r.t. the points and the directions.
void jvp_backward_batch(const Network& net, const BatchTape& tape, const Matrix& upstream, Vector& param_grad,
                        Matrix* grad_x, Matrix* grad_v);

void write_network(std::ostream& os, const Network& net);
Network read_network(std::istream& is);

}  // namespace certsynth
