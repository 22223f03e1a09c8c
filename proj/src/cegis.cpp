#include "certsynth/cegis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace certsynth {

std::string to_string(CegisStatus s) { return s == CegisStatus::Certified ? "Certified" : "NotCertified"; }

void CegisConfig::validate() const {
  if (max_iterations < 1) throw Error(ErrorKind::PreconditionViolated, "max iterations must be >= 1");
  if (samples_per_vc < 1) throw Error(ErrorKind::PreconditionViolated, "samples per condition must be >= 1");
  if (spread < 0) throw Error(ErrorKind::PreconditionViolated, "spread must be >= 0");
  if (spread_radius && !(*spread_radius >= 0.0)) throw Error(ErrorKind::PreconditionViolated, "spread radius must be >= 0");
  if (falsify_samples < 1) throw Error(ErrorKind::PreconditionViolated, "falsification samples must be >= 1");
  if (max_restarts < 0 || plateau_iterations < 1) throw Error(ErrorKind::PreconditionViolated, "bad restart policy");
  train.validate();
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Nets initial_nets(const Problem& p, std::uint64_t seed) {
  Nets n{init_network(p.certificate_shape, seed), std::nullopt};
  if (p.controller_shape) n.ctrl = init_network(*p.controller_shape, mix(seed, 1));
  return n;
}

std::vector<VerificationCondition> compile(const Problem& p, const Nets& n) {
  return compile_rules(p, n.cert, n.ctrl ? &*n.ctrl : nullptr);
}

}  // namespace

CegisResult run_cegis(const Problem& problem, const CegisConfig& config) {
  config.validate();
  Nets nets = initial_nets(problem, config.seed);
  const std::vector<VerificationCondition> base = compile(problem, nets);

  Rng sampler(mix(config.seed, 2));
  Dataset data = make_dataset(base, config.samples_per_vc, sampler);
  const double radius = config.spread_radius.value_or(0.05 * box_widths(problem.domain.base).maxCoeff());
  if (config.trace) write_trace_header(*config.trace, base);

  CegisResult result{CegisStatus::NotCertified, nets.cert, nets.ctrl, {}, {}, {}, 0};
  double best_loss = std::numeric_limits<double>::infinity();
  int stalled = 0;

  for (int it = 0; it < config.max_iterations; ++it) {
    IterationRecord rec;
    rec.iteration = it;

    auto t0 = Clock::now();
    try {
      TrainResult tr = train(base, nets, data, config.train);
      if (config.trace) write_trace_rows(*config.trace, it, tr.trace);
      nets = std::move(tr.nets);
      rec.loss = tr.loss;
      rec.epochs = static_cast<int>(tr.trace.size());
    } catch (const Error& e) {
      // Keep the previous networks; the plateau rule below decides on a restart.
      rec.error = e.what();
      rec.loss = std::numeric_limits<double>::infinity();
    }
    rec.train_seconds = seconds_since(t0);

    t0 = Clock::now();
    const auto vcs = compile(problem, nets);
    Rng screen(mix(config.seed, 1000 + static_cast<std::uint64_t>(it)));
    for (const auto& vc : vcs) {
      if (auto cex = falsify_random(vc, config.falsify_samples, screen)) rec.counterexamples.push_back(std::move(*cex));
    }
    rec.screened = !rec.counterexamples.empty();
    if (!rec.screened) {
      rec.verdicts = verify_all(vcs, config.verify);
      for (std::size_t c = 0; c < vcs.size(); ++c) {
        const Verdict& v = rec.verdicts[c].second;
        if (v.kind == VerdictKind::Falsified) {
          rec.counterexamples.push_back(Counterexample{vcs[c].id, v.cex, v.violation});
        } else if (v.kind == VerdictKind::Unknown) {
          for (const auto& x : v.undecided_points) {
            try {
              rec.counterexamples.push_back(Counterexample{vcs[c].id, x, vc_violation(vcs[c], x)});
              ++rec.pseudo_counterexamples;
            } catch (const Error&) {
            }
          }
        }
      }
    }
    rec.verify_seconds = seconds_since(t0);

    result.cert = nets.cert;
    result.ctrl = nets.ctrl;
    if (!rec.screened && all_certified(rec.verdicts)) {
      result.status = CegisStatus::Certified;
      result.verdicts = rec.verdicts;
      rec.dataset_sizes.reserve(data.conditions.size());
      for (const auto& s : data.conditions) rec.dataset_sizes.push_back(s.size());
      result.iterations.push_back(std::move(rec));
      break;
    }

    Rng spreader(mix(config.seed, 2000 + static_cast<std::uint64_t>(it)));
    absorb_counterexamples(data, base, rec.counterexamples, config.spread, radius, it, spreader);
    for (const auto& s : data.conditions) rec.dataset_sizes.push_back(s.size());

    // Restart policy: no 1% improvement of the best nonzero loss for a few iterations.
    if (rec.loss < 0.99 * best_loss) {
      best_loss = rec.loss;
      stalled = 0;
    } else {
      ++stalled;
    }
    if (rec.loss > 0.0 && stalled >= config.plateau_iterations && result.restarts < config.max_restarts &&
        it + 1 < config.max_iterations) {
      nets = initial_nets(problem, config.seed + static_cast<std::uint64_t>(it) + 1);
      rec.restarted = true;
      ++result.restarts;
      stalled = 0;
      best_loss = std::numeric_limits<double>::infinity();
    }
    result.iterations.push_back(std::move(rec));
  }

  if (result.status != CegisStatus::Certified) {
    const IterationRecord& last = result.iterations.back();
    result.verdicts = last.verdicts;
  }
  result.bounds = quantitative_bounds(problem, result.cert, result.status == CegisStatus::Certified);
  return result;
}

CheckResult check_certificate(const Problem& problem, const Network& cert, const Network* ctrl,
                              const VerifierConfig& config) {
  CheckResult r;
  r.verdicts = verify_all(compile_rules(problem, cert, ctrl), config);
  r.bounds = quantitative_bounds(problem, cert, all_certified(r.verdicts));
  return r;
}

namespace {

ProbabilityBound make_bound(std::string where, Vector point, double value, double level) {
  if (!(level > 0.0)) throw Error(ErrorKind::PreconditionViolated, "probability level must be positive");
  ProbabilityBound b;
  b.where = std::move(where);
  b.point = std::move(point);
  b.value = std::max(0.0, value / level);
  b.vacuous = b.value > 1.0;
  return b;
}

double set_sup(const Network& cert, const ConstrainedSet& set) {
  const Eigen::Index n = set.dim();
  const int per_axis = n == 1 ? 256 : n == 2 ? 32 : n == 3 ? 10 : 4;
  const Vector lo = box_lo(set.base);
  const Vector width = box_widths(set.base);
  double sup = -std::numeric_limits<double>::infinity();
  std::vector<int> idx(static_cast<std::size_t>(n), 0);
  while (true) {
    Box cell(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double a = lo[i] + width[i] * idx[static_cast<std::size_t>(i)] / per_axis;
      const double b = idx[static_cast<std::size_t>(i)] + 1 == per_axis
                           ? set.base[i].hi()
                           : lo[i] + width[i] * (idx[static_cast<std::size_t>(i)] + 1) / per_axis;
      cell[i] = Interval(std::min(a, b), std::max(a, b));
    }
    if (classify_box(set, cell) != BoxClass::Outside) sup = std::max(sup, interval_forward(cert, cell)[0].hi());
    Eigen::Index k = 0;
    while (k < n && ++idx[static_cast<std::size_t>(k)] == per_axis) idx[static_cast<std::size_t>(k++)] = 0;
    if (k == n) break;
  }
  if (!std::isfinite(sup)) throw Error(ErrorKind::EmptySetSuspected, "no part of the set found for the bound");
  return sup;
}

}  // namespace

ProbabilityBound probability_bound(const Network& cert, const Vector& x0, double level) {
  return make_bound("x0", x0, forward(cert, x0)[0], level);
}

ProbabilityBound probability_bound(const Network& cert, const ConstrainedSet& set, double level) {
  if (!(level > 0.0)) throw Error(ErrorKind::PreconditionViolated, "probability level must be positive");
  return make_bound("init", Vector(), set_sup(cert, set), level);
}

std::vector<ProbabilityBound> quantitative_bounds(const Problem& problem, const Network& cert, bool certified) {
  std::vector<ProbabilityBound> out;
  if (const auto* s = std::get_if<ProbabilisticSafetySpec>(&problem.spec)) {
    // With drift c the bound covers the configured horizon H: (B + c H) / level.
    const double extra = problem.rule_params.drift * problem.rule_params.horizon;
    for (std::size_t i = 0; i < s->initial_points.size(); ++i) {
      const Vector& x0 = s->initial_points[i];
      out.push_back(make_bound("x0[" + std::to_string(i) + "]", x0, forward(cert, x0)[0] + extra, s->level));
    }
    out.push_back(make_bound("init", Vector(), set_sup(cert, s->init) + extra, s->level));
    for (auto& b : out) b.advisory = !certified;
  } else if (const auto* r = std::get_if<ProbabilisticReachabilitySpec>(&problem.spec)) {
    for (std::size_t i = 0; i < r->initial_points.size(); ++i) {
      const Vector& x0 = r->initial_points[i];
      ProbabilityBound b = make_bound("x0[" + std::to_string(i) + "]", x0, forward(cert, x0)[0], r->decrease);
      b.informational = true;
      b.vacuous = false;
      b.advisory = !certified;
      out.push_back(std::move(b));
    }
  }
  return out;
}

}  // namespace certsynth
