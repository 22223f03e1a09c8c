#include "certsynth/learner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include "certsynth/format.hpp"

namespace certsynth {

Dataset make_dataset(const std::vector<VerificationCondition>& vcs, int samples_per_vc, Rng& rng) {
  if (samples_per_vc < 1) throw Error(ErrorKind::PreconditionViolated, "samples per condition must be >= 1");
  Dataset d;
  for (const auto& vc : vcs) d.conditions.push_back(ConditionSamples{vc.id, sample_region(vc.region, samples_per_vc, rng), {}, {}});
  return d;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw Error(ErrorKind::PreconditionViolated, "epochs must be >= 0");
  if (!(step > 0.0)) throw Error(ErrorKind::PreconditionViolated, "step size must be positive");
  if (power != 1 && power != 2) throw Error(ErrorKind::PreconditionViolated, "penalty exponent must be 1 or 2");
  if (!(kappa >= 1.0)) throw Error(ErrorKind::PreconditionViolated, "counterexample weight must be >= 1");
  for (const auto& [id, m] : margins) {
    if (!(m >= 0.0)) throw Error(ErrorKind::PreconditionViolated, "train margin for " + id + " must be >= 0");
  }
}

double TrainConfig::margin(const VerificationCondition& vc) const {
  const auto it = margins.find(vc.id);
  return it == margins.end() ? vc.train_margin : it->second;
}

Vector Nets::parameters() const {
  const Vector a = cert.parameters();
  if (!ctrl) return a;
  const Vector b = ctrl->parameters();
  Vector out(a.size() + b.size());
  out << a, b;
  return out;
}

void Nets::set_parameters(const Vector& flat) {
  const Eigen::Index n = cert.parameter_count();
  cert.set_parameters(flat.head(n));
  if (ctrl) ctrl->set_parameters(flat.tail(flat.size() - n));
}

LossResult loss(const std::vector<VerificationCondition>& vcs, const Nets& nets, const Dataset& data,
                const TrainConfig& config) {
  if (data.conditions.size() != vcs.size()) {
    throw Error(ErrorKind::PreconditionViolated, "dataset does not match the conditions");
  }
  const NetView view = nets.view();
  const Eigen::Index n_cert = nets.cert.parameter_count();
  const Eigen::Index n_ctrl = nets.ctrl ? nets.ctrl->parameter_count() : 0;
  Vector grad_cert = Vector::Zero(n_cert);
  Vector grad_ctrl = Vector::Zero(n_ctrl);
  LossResult out;
  out.max_violation.assign(vcs.size(), std::numeric_limits<double>::quiet_NaN());

  for (std::size_t c = 0; c < vcs.size(); ++c) {
    const VerificationCondition& vc = vcs[c];
    const ConditionSamples& s = data.conditions[c];
    if (s.size() == 0) continue;
    const auto n_points = static_cast<Eigen::Index>(s.points.size());
    Matrix X(vc.region.set.dim(), static_cast<Eigen::Index>(s.size()));
    for (Eigen::Index k = 0; k < n_points; ++k) X.col(k) = s.points[static_cast<std::size_t>(k)];
    for (std::size_t k = 0; k < s.counterexamples.size(); ++k) X.col(n_points + static_cast<Eigen::Index>(k)) = s.counterexamples[k];

    // Gates use the current weights and are constant within the epoch.
    std::vector<bool> active(static_cast<std::size_t>(X.cols()), true);
    for (const auto& g : vc.gates) {
      const Vector gv = g.values(view, X);
      for (Eigen::Index k = 0; k < X.cols(); ++k) {
        if (!(gv[k] <= 0.0)) active[static_cast<std::size_t>(k)] = false;
      }
    }

    BatchCache cache;
    const Vector v = vc.violation.values(view, X, &cache);
    const double mu = config.margin(vc);
    const double scale = 1.0 / static_cast<double>(std::max<Eigen::Index>(1, n_points));
    Vector coeff = Vector::Zero(X.cols());
    double sum = 0.0;
    double worst = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < X.cols(); ++k) {
      if (!active[static_cast<std::size_t>(k)]) continue;
      if (!std::isfinite(v[k])) {
        throw Error(ErrorKind::NonFiniteResult, "condition " + vc.id + " is not finite at a training point");
      }
      worst = std::max(worst, v[k]);
      const double h = v[k] + mu;
      if (h <= 0.0) continue;
      const double m = k < n_points ? 1.0 : config.kappa;
      sum += m * (config.power == 2 ? h * h : h);
      coeff[k] = scale * m * (config.power == 2 ? 2.0 * h : 1.0);
    }
    if (worst > -std::numeric_limits<double>::infinity()) out.max_violation[c] = worst;
    out.value += scale * sum;
    if (sum > 0.0) vc.violation.accumulate_gradient(view, cache, coeff, grad_cert, nets.ctrl ? &grad_ctrl : nullptr);
  }
  if (!std::isfinite(out.value)) throw Error(ErrorKind::NonFiniteResult, "training loss is not finite");
  out.grad.resize(n_cert + n_ctrl);
  out.grad << grad_cert, grad_ctrl;
  return out;
}

TrainResult train(const std::vector<VerificationCondition>& vcs, const Nets& nets, const Dataset& data,
                  const TrainConfig& config) {
  config.validate();
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.9;  // short memory: hinge gradients shrink geometrically near zero loss
  constexpr double kEps = 1e-8;
  constexpr int kPatience = 10;

  TrainResult result{nets, 0.0, {}};
  Nets current = nets;
  Vector theta = current.parameters();
  Vector m = Vector::Zero(theta.size());
  Vector s = Vector::Zero(theta.size());
  double best = std::numeric_limits<double>::infinity();
  double initial = 0.0;
  int zero_run = 0;

  for (int epoch = 0; epoch <= config.epochs; ++epoch) {
    const LossResult l = loss(vcs, current, data, config);
    result.trace.push_back(EpochRecord{epoch, l.value, l.max_violation});
    if (epoch == 0) initial = l.value;
    if (initial > 0.0 && l.value > 1e6 * initial) {
      throw Error(ErrorKind::DivergenceDetected,
                  "loss grew from " + format_double(initial) + " to " + format_double(l.value));
    }
    if (l.value < best) {
      best = l.value;
      result.nets = current;
    }
    zero_run = l.value == 0.0 ? zero_run + 1 : 0;
    if (zero_run >= kPatience || epoch == config.epochs) break;

    const double rate =
        0.5 * config.step * (1.0 + std::cos(std::numbers::pi * epoch / static_cast<double>(config.epochs)));
    m = kBeta1 * m + (1.0 - kBeta1) * l.grad;
    s = kBeta2 * s + (1.0 - kBeta2) * l.grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(kBeta1, epoch + 1);
    const double c2 = 1.0 - std::pow(kBeta2, epoch + 1);
    theta -= rate * ((m / c1).array() / ((s / c2).array().sqrt() + kEps)).matrix();
    current.set_parameters(theta);
  }
  result.loss = best;
  return result;
}

void absorb_counterexamples(Dataset& data, const std::vector<VerificationCondition>& vcs,
                            const std::vector<Counterexample>& cexs, int spread, double radius, int iteration,
                            Rng& rng) {
  if (spread < 0 || !(radius >= 0.0)) throw Error(ErrorKind::PreconditionViolated, "spread and radius must be >= 0");
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit;
  for (const auto& cex : cexs) {
    std::size_t c = 0;
    while (c < vcs.size() && vcs[c].id != cex.vc_id) ++c;
    if (c == vcs.size()) throw Error(ErrorKind::PreconditionViolated, "counterexample for unknown condition " + cex.vc_id);
    ConditionSamples& s = data.conditions[c];
    std::vector<Vector> added{cex.point};
    for (int k = 0; k < spread; ++k) {
      Vector dir(cex.point.size());
      for (auto& d : dir) d = normal(rng);
      const double norm = dir.norm();
      const double r = radius * std::pow(unit(rng), 1.0 / static_cast<double>(dir.size()));
      const Vector y = norm > 0.0 ? Vector(cex.point + (r / norm) * dir) : cex.point;
      bool member = false;
      try {
        member = region_membership(vcs[c].region, y);
      } catch (const Error&) {
      }
      if (!member) continue;
      if (std::find(added.begin(), added.end(), y) != added.end()) continue;
      added.push_back(y);
    }
    for (auto& y : added) {
      s.counterexamples.push_back(std::move(y));
      s.cex_iteration.push_back(iteration);
    }
  }
}

void write_trace_header(std::ostream& out, const std::vector<VerificationCondition>& vcs) {
  out << "iteration,epoch,loss";
  for (const auto& vc : vcs) out << ",max_violation:" << vc.id;
  out << '\n';
}

void write_trace_rows(std::ostream& out, int iteration, const std::vector<EpochRecord>& trace) {
  for (const auto& r : trace) {
    out << iteration << ',' << r.epoch << ',' << format_double(r.loss);
    for (double v : r.max_violation) out << ',' << (std::isnan(v) ? std::string("nan") : format_double(v));
    out << '\n';
  }
}

}  // namespace certsynth
