#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "certsynth/verifier.hpp"

namespace certsynth {

// Training points of one condition. Counterexamples (and their spread
// copies) carry weight kappa and do not count towards the normalizer.
struct ConditionSamples {
  std::string vc_id;
  std::vector<Vector> points;
  std::vector<Vector> counterexamples;
  std::vector<int> cex_iteration;

  std::size_t size() const { return points.size() + counterexamples.size(); }
};

struct Dataset {
  std::vector<ConditionSamples> conditions;  // same order as the VCs
};

// Uniform samples of every VC region.
Dataset make_dataset(const std::vector<VerificationCondition>& vcs, int samples_per_vc, Rng& rng);

struct TrainConfig {
  int epochs = 500;
  double step = 1e-2;  // cosine-decayed over the epochs
  int power = 2;       // p in the hinge penalty
  double kappa = 10.0;
  std::map<std::string, double> margins;  // per-VC overrides of train_margin

  void validate() const;
  double margin(const VerificationCondition& vc) const;
};

// The trainable networks. The controller is optional.
struct Nets {
  Network cert;
  std::optional<Network> ctrl;

  NetView view() const { return NetView{&cert, ctrl ? &*ctrl : nullptr}; }
  Vector parameters() const;
  void set_parameters(const Vector& flat);
};

struct LossResult {
  double value = 0.0;
  Vector grad;                   // cert parameters then controller parameters
  std::vector<double> max_violation;  // per VC over gate-active points, NaN when none
};

LossResult loss(const std::vector<VerificationCondition>& vcs, const Nets& nets, const Dataset& data,
                const TrainConfig& config);

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  std::vector<double> max_violation;
};

struct TrainResult {
  Nets nets;
  double loss = 0.0;  // loss of the returned parameters
  std::vector<EpochRecord> trace;
};

// Full-batch Adam with cosine step decay. Returns the best parameters seen.
TrainResult train(const std::vector<VerificationCondition>& vcs, const Nets& nets, const Dataset& data,
                  const TrainConfig& config);

// Adds each counterexample plus up to `spread` perturbed copies inside the
// region (uniform in a ball of the given radius, duplicates dropped).
void absorb_counterexamples(Dataset& data, const std::vector<VerificationCondition>& vcs,
                            const std::vector<Counterexample>& cexs, int spread, double radius, int iteration,
                            Rng& rng);

void write_trace_header(std::ostream& out, const std::vector<VerificationCondition>& vcs);
void write_trace_rows(std::ostream& out, int iteration, const std::vector<EpochRecord>& trace);

}  // namespace certsynth
