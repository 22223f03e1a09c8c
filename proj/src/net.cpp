#include "certsynth/net.hpp"

#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "certsynth/format.hpp"

namespace certsynth {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Square: return "square";
  }
  return "identity";
}

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  if (name == "square") return Activation::Square;
  if (name == "identity") return Activation::Identity;
  throw Error(ErrorKind::InvalidProblem, "unknown activation '" + name + "' (expected tanh, relu, square)");
}

bool NetworkShape::has_relu() const {
  for (const auto& h : hidden) {
    if (h.activation == Activation::Relu) return true;
  }
  return false;
}

void NetworkShape::validate() const {
  if (input_dim < 1) throw Error(ErrorKind::InvalidProblem, "network input_dim must be >= 1");
  if (output_dim < 1) throw Error(ErrorKind::InvalidProblem, "network output_dim must be >= 1");
  for (const auto& h : hidden) {
    if (h.width < 1) throw Error(ErrorKind::InvalidProblem, "hidden layer width must be >= 1");
  }
  if (clamp && clamp->size() != output_dim) {
    throw Error(ErrorKind::InvalidProblem, "clamp box dimension must equal output_dim");
  }
}

bool operator==(const NetworkShape& a, const NetworkShape& b) {
  if (a.input_dim != b.input_dim || a.output_dim != b.output_dim || a.hidden != b.hidden) return false;
  if (a.clamp.has_value() != b.clamp.has_value()) return false;
  return !a.clamp || *a.clamp == *b.clamp;
}

Network::Network(NetworkShape shape, std::vector<Layer> layers) : shape_(std::move(shape)), layers_(std::move(layers)) {
  shape_.validate();
  if (layers_.size() != shape_.hidden.size() + 1) {
    throw Error(ErrorKind::InvalidProblem, "layer count does not match shape");
  }
  Eigen::Index in = shape_.input_dim;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Eigen::Index out = l < shape_.hidden.size() ? shape_.hidden[l].width : shape_.output_dim;
    if (layers_[l].weight.rows() != out || layers_[l].weight.cols() != in || layers_[l].bias.size() != out) {
      throw Error(ErrorKind::InvalidProblem, "layer " + std::to_string(l) + " dimensions do not chain");
    }
    if (!layers_[l].weight.allFinite() || !layers_[l].bias.allFinite()) {
      throw Error(ErrorKind::NonFiniteResult, "non-finite network parameter");
    }
    in = out;
  }
}

Eigen::Index Network::parameter_count() const {
  Eigen::Index n = 0;
  for (const auto& layer : layers_) n += layer.weight.size() + layer.bias.size();
  return n;
}

Vector Network::parameters() const {
  Vector flat(parameter_count());
  Eigen::Index k = 0;
  for (const auto& layer : layers_) {
    flat.segment(k, layer.weight.size()) = layer.weight.reshaped();
    k += layer.weight.size();
    flat.segment(k, layer.bias.size()) = layer.bias;
    k += layer.bias.size();
  }
  return flat;
}

void Network::set_parameters(const Vector& flat) {
  if (flat.size() != parameter_count()) throw Error(ErrorKind::PreconditionViolated, "parameter vector size mismatch");
  Eigen::Index k = 0;
  for (auto& layer : layers_) {
    layer.weight.reshaped() = flat.segment(k, layer.weight.size());
    k += layer.weight.size();
    layer.bias = flat.segment(k, layer.bias.size());
    k += layer.bias.size();
  }
}

bool operator==(const Network& a, const Network& b) {
  if (!(a.shape_ == b.shape_)) return false;
  for (std::size_t l = 0; l < a.layers_.size(); ++l) {
    if (a.layers_[l].weight != b.layers_[l].weight || a.layers_[l].bias != b.layers_[l].bias) return false;
  }
  return true;
}

Network init_network(const NetworkShape& shape, std::uint64_t seed) {
  shape.validate();
  std::mt19937_64 rng(seed);
  std::vector<Layer> layers;
  int in = shape.input_dim;
  for (std::size_t l = 0; l <= shape.hidden.size(); ++l) {
    const int out = l < shape.hidden.size() ? shape.hidden[l].width : shape.output_dim;
    const double s = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> dist(-s, s);
    Layer layer{Matrix(out, in), Vector::Zero(out)};
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = dist(rng);
    }
    layers.push_back(std::move(layer));
    in = out;
  }
  return Network(shape, std::move(layers));
}

namespace detail {

Interval activation_slope(Activation a, const Interval& z) {
  switch (a) {
    case Activation::Tanh: return tanh_derivative(z);
    case Activation::Square: return Interval(2.0) * z;
    case Activation::Relu: throw Error(ErrorKind::ReluNotSupported, "relu has no enclosable derivative");
    case Activation::Identity: break;
  }
  return Interval(1.0);
}

double clamp_output(double center, double halfwidth, double z) {
  const double y = center + halfwidth * std::tanh(z);
  // tanh saturates to +-1 in floating point; keep outputs strictly inside.
  const double lo = center - halfwidth;
  const double hi = center + halfwidth;
  if (y >= hi) return std::nextafter(hi, lo);
  if (y <= lo) return std::nextafter(lo, hi);
  return y;
}

Interval clamp_output(const Interval& target, const Interval& z) {
  const Interval raw = Interval(target.mid()) + Interval(0.5 * target.width()) * tanh(z);
  return intersect(raw, target);
}

void require_finite(const Vector& v) {
  if (!v.allFinite()) throw Error(ErrorKind::NonFiniteResult, "network output is not finite");
}

void require_finite(const IntervalVector& v) {
  for (const auto& x : v) {
    if (!std::isfinite(x.lo()) || !std::isfinite(x.hi())) throw Error(ErrorKind::NonFiniteBound, "network enclosure");
  }
}

}  // namespace detail

namespace {

// Per-layer elementwise nonlinearity including the clamp transform on the
// output layer, with its first and second derivatives.
struct LayerActivation {
  Activation act = Activation::Identity;
  const Box* clamp = nullptr;

  double value(Eigen::Index row, double a) const {
    const double z = detail::activate(act, a);
    if (!clamp) return z;
    return detail::clamp_output((*clamp)[row].mid(), 0.5 * (*clamp)[row].width(), z);
  }
  double slope(Eigen::Index row, double a) const {
    if (!clamp) return detail::activation_slope(act, a);
    return 0.5 * (*clamp)[row].width() * tanh_derivative(a);
  }
  double curvature(Eigen::Index row, double a) const {
    if (clamp) return 0.5 * (*clamp)[row].width() * tanh_second_derivative(a);
    switch (act) {
      case Activation::Tanh: return tanh_second_derivative(a);
      case Activation::Square: return 2.0;
      default: return 0.0;
    }
  }
};

LayerActivation layer_activation(const Network& net, std::size_t l) {
  LayerActivation la{net.activation(l), nullptr};
  if (l + 1 == net.layers().size() && net.shape().clamp) la.clamp = &*net.shape().clamp;
  return la;
}

template <class F>
Matrix map_rows(const Matrix& a, F&& f) {
  Matrix out(a.rows(), a.cols());
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    for (Eigen::Index r = 0; r < a.rows(); ++r) out(r, c) = f(r, a(r, c));
  }
  return out;
}

// Offsets of each layer's weight block inside the flat parameter vector.
std::vector<Eigen::Index> layer_offsets(const Network& net) {
  std::vector<Eigen::Index> offsets;
  Eigen::Index k = 0;
  for (const auto& layer : net.layers()) {
    offsets.push_back(k);
    k += layer.weight.size() + layer.bias.size();
  }
  return offsets;
}

void accumulate(const Network& net, std::size_t l, Eigen::Index offset, const Matrix& dw, const Vector& db,
                Vector& param_grad) {
  const auto& layer = net.layers()[l];
  param_grad.segment(offset, layer.weight.size()) += dw.reshaped();
  param_grad.segment(offset + layer.weight.size(), layer.bias.size()) += db;
}

}  // namespace

BackwardResult backward(const Network& net, const Vector& x, const Vector& upstream) {
  if (upstream.size() != net.output_dim()) throw Error(ErrorKind::PreconditionViolated, "upstream size mismatch");
  BatchTape tape;
  forward_batch(net, x, &tape);
  BackwardResult r;
  r.param_grad = Vector::Zero(net.parameter_count());
  r.input_grad = backward_batch(net, tape, upstream, r.param_grad).col(0);
  if (!r.input_grad.allFinite() || !r.param_grad.allFinite()) {
    throw Error(ErrorKind::NonFiniteResult, "non-finite gradient");
  }
  return r;
}

IntervalVector interval_forward(const Network& net, const Box& b) { return forward<Interval>(net, b); }

IntervalVector interval_input_gradient(const Network& net, const Box& b) {
  if (net.output_dim() != 1) throw Error(ErrorKind::PreconditionViolated, "input gradient needs a scalar network");
  if (b.size() != net.input_dim()) throw Error(ErrorKind::PreconditionViolated, "box dimension mismatch");
  const IntervalVector g = input_jacobian<Interval>(net, b).row(0).transpose();
  detail::require_finite(g);
  return g;
}

Vector input_gradient(const Network& net, const Vector& x) {
  return backward(net, x, Vector::Ones(net.output_dim())).input_grad;
}

Matrix forward_batch(const Network& net, const Matrix& X, BatchTape* tape) {
  if (X.rows() != net.input_dim()) throw Error(ErrorKind::PreconditionViolated, "network input dimension mismatch");
  if (tape) {
    tape->pre.clear();
    tape->post.assign(1, X);
    tape->tangent.clear();
  }
  Matrix z = X;
  const auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix a = layers[l].weight * z;
    a.colwise() += layers[l].bias;
    const LayerActivation la = layer_activation(net, l);
    z = map_rows(a, [&](Eigen::Index r, double v) { return la.value(r, v); });
    if (tape) {
      tape->pre.push_back(std::move(a));
      tape->post.push_back(z);
    }
  }
  return z;
}

Matrix backward_batch(const Network& net, const BatchTape& tape, const Matrix& upstream, Vector& param_grad) {
  const auto offsets = layer_offsets(net);
  Matrix g = upstream;
  for (std::size_t l = net.layers().size(); l-- > 0;) {
    const LayerActivation la = layer_activation(net, l);
    const Matrix ga = g.cwiseProduct(map_rows(tape.pre[l], [&](Eigen::Index r, double v) { return la.slope(r, v); }));
    accumulate(net, l, offsets[l], ga * tape.post[l].transpose(), ga.rowwise().sum(), param_grad);
    g = net.layers()[l].weight.transpose() * ga;
  }
  return g;
}

Matrix jvp_batch(const Network& net, BatchTape& tape, const Matrix& V) {
  if (V.rows() != net.input_dim() || V.cols() != tape.post[0].cols()) {
    throw Error(ErrorKind::PreconditionViolated, "tangent batch shape mismatch");
  }
  tape.tangent.assign(1, V);
  Matrix t = V;
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const LayerActivation la = layer_activation(net, l);
    const Matrix m = net.layers()[l].weight * t;
    t = m.cwiseProduct(map_rows(tape.pre[l], [&](Eigen::Index r, double v) { return la.slope(r, v); }));
    tape.tangent.push_back(t);
  }
  return t;
}

void jvp_backward_batch(const Network& net, const BatchTape& tape, const Matrix& upstream, Vector& param_grad,
                        Matrix* grad_x, Matrix* grad_v) {
  const auto offsets = layer_offsets(net);
  Matrix gt = upstream;
  Matrix gz = Matrix::Zero(upstream.rows(), upstream.cols());
  for (std::size_t l = net.layers().size(); l-- > 0;) {
    const LayerActivation la = layer_activation(net, l);
    const Matrix& w = net.layers()[l].weight;
    const Matrix s1 = map_rows(tape.pre[l], [&](Eigen::Index r, double v) { return la.slope(r, v); });
    const Matrix s2 = map_rows(tape.pre[l], [&](Eigen::Index r, double v) { return la.curvature(r, v); });
    const Matrix m = w * tape.tangent[l];
    const Matrix gm = gt.cwiseProduct(s1);
    const Matrix ga = gt.cwiseProduct(m).cwiseProduct(s2) + gz.cwiseProduct(s1);
    accumulate(net, l, offsets[l], gm * tape.tangent[l].transpose() + ga * tape.post[l].transpose(),
               ga.rowwise().sum(), param_grad);
    gt = w.transpose() * gm;
    gz = w.transpose() * ga;
  }
  if (grad_x) *grad_x = gz;
  if (grad_v) *grad_v = gt;
}

void write_network(std::ostream& os, const Network& net) {
  const NetworkShape& s = net.shape();
  os << "network v1\n";
  os << "input_dim " << s.input_dim << "\n";
  os << "output_dim " << s.output_dim << "\n";
  for (const auto& h : s.hidden) os << "hidden " << h.width << " " << to_string(h.activation) << "\n";
  if (s.clamp) {
    os << "transform box_clamp";
    for (const auto& iv : *s.clamp) os << " " << format_double(iv.lo()) << " " << format_double(iv.hi());
    os << "\n";
  } else {
    os << "transform identity\n";
  }
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const auto& layer = net.layers()[l];
    os << "layer " << l << " " << layer.weight.rows() << " " << layer.weight.cols() << "\n";
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) os << (c ? " " : "") << format_double(layer.weight(r, c));
      os << "\n";
    }
    os << "bias";
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) os << " " << format_double(layer.bias[r]);
    os << "\n";
  }
  os << "end\n";
}

namespace {

[[noreturn]] void bad_network(const std::string& msg) { throw Error(ErrorKind::IoError, "weight block: " + msg); }

std::istringstream next_line(std::istream& is, const std::string& expected_key) {
  std::string line;
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key != expected_key) bad_network("expected '" + expected_key + "', found '" + key + "'");
    return ls;
  }
  bad_network("unexpected end of input, expected '" + expected_key + "'");
}

double read_double(std::istream& ls) {
  std::string tok;
  if (!(ls >> tok)) bad_network("missing number");
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (*end != '\0') bad_network("malformed number '" + tok + "'");
  return v;
}

}  // namespace

Network read_network(std::istream& is) {
  {
    auto ls = next_line(is, "network");
    std::string version;
    ls >> version;
    if (version != "v1") bad_network("unsupported version '" + version + "'");
  }
  NetworkShape shape;
  if (!(next_line(is, "input_dim") >> shape.input_dim)) bad_network("input_dim");
  if (!(next_line(is, "output_dim") >> shape.output_dim)) bad_network("output_dim");
  std::string line;
  std::vector<std::string> pending;
  for (;;) {
    if (!std::getline(is, line)) bad_network("unexpected end of input");
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key.empty()) continue;
    if (key == "hidden") {
      HiddenLayer h;
      std::string act;
      if (!(ls >> h.width >> act)) bad_network("malformed hidden line");
      h.activation = parse_activation(act);
      shape.hidden.push_back(h);
    } else if (key == "transform") {
      std::string kind;
      ls >> kind;
      if (kind == "box_clamp") {
        Box b(shape.output_dim);
        for (int j = 0; j < shape.output_dim; ++j) {
          const double lo = read_double(ls);
          const double hi = read_double(ls);
          b[j] = Interval(lo, hi);
        }
        shape.clamp = b;
      } else if (kind != "identity") {
        bad_network("unknown transform '" + kind + "'");
      }
      break;
    } else {
      bad_network("unexpected key '" + key + "'");
    }
  }
  std::vector<Layer> layers;
  for (std::size_t l = 0; l <= shape.hidden.size(); ++l) {
    auto ls = next_line(is, "layer");
    std::size_t index = 0;
    Eigen::Index rows = 0, cols = 0;
    if (!(ls >> index >> rows >> cols) || index != l || rows < 1 || cols < 1) bad_network("malformed layer header");
    Layer layer{Matrix(rows, cols), Vector(rows)};
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (!std::getline(is, line)) bad_network("truncated weight matrix");
      std::istringstream rs(line);
      for (Eigen::Index c = 0; c < cols; ++c) layer.weight(r, c) = read_double(rs);
    }
    auto bs = next_line(is, "bias");
    for (Eigen::Index r = 0; r < rows; ++r) layer.bias[r] = read_double(bs);
    layers.push_back(std::move(layer));
  }
  next_line(is, "end");
  return Network(shape, std::move(layers));
}

}  // namespace certsynth
