#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "certsynth/learner.hpp"

namespace certsynth {

struct CegisConfig {
  int max_iterations = 20;
  int samples_per_vc = 500;
  int spread = 4;
  std::optional<double> spread_radius;  // default 0.05 * widest domain side
  int falsify_samples = 1000;
  int max_restarts = 3;
  int plateau_iterations = 3;
  TrainConfig train;
  VerifierConfig verify;
  std::uint64_t seed = 0;
  std::ostream* trace = nullptr;  // epoch CSV, optional

  void validate() const;
};

enum class CegisStatus { Certified, NotCertified };

std::string to_string(CegisStatus s);

struct IterationRecord {
  int iteration = 0;
  double loss = 0.0;
  int epochs = 0;
  bool screened = false;  // random falsification found counterexamples; B&B skipped
  bool restarted = false;  // nets re-seeded after this iteration
  std::string error;       // training failure, if any
  std::vector<std::pair<std::string, Verdict>> verdicts;
  std::vector<Counterexample> counterexamples;
  int pseudo_counterexamples = 0;  // from Unknown verdicts
  std::vector<std::size_t> dataset_sizes;
  double train_seconds = 0.0;
  double verify_seconds = 0.0;
};

struct ProbabilityBound {
  std::string where;  // "x0[i]" or "init"
  Vector point;       // empty for the set bound
  double value = 0.0;
  bool vacuous = false;  // value > 1
  bool advisory = false;  // conditions not all certified
  bool informational = false;  // expected-time style bound, not a probability
};

struct CegisResult {
  CegisStatus status = CegisStatus::NotCertified;
  Network cert;
  std::optional<Network> ctrl;
  std::vector<IterationRecord> iterations;
  std::vector<std::pair<std::string, Verdict>> verdicts;  // of the returned networks
  std::vector<ProbabilityBound> bounds;
  int restarts = 0;
};

CegisResult run_cegis(const Problem& problem, const CegisConfig& config);

struct CheckResult {
  std::vector<std::pair<std::string, Verdict>> verdicts;
  std::vector<ProbabilityBound> bounds;
  bool certified() const { return all_certified(verdicts); }
};

CheckResult check_certificate(const Problem& problem, const Network& cert, const Network* ctrl,
                              const VerifierConfig& config);

// Upper bound cert(x0) / level on the probability of reaching the level set.
ProbabilityBound probability_bound(const Network& cert, const Vector& x0, double level);
// Same over a set: enclosure maximum over the member part of its base box.
ProbabilityBound probability_bound(const Network& cert, const ConstrainedSet& set, double level);

// Quantitative outputs for the problem's spec (empty for non-probabilistic
// specs). Drift-adjusted where the rules use a drift term.
std::vector<ProbabilityBound> quantitative_bounds(const Problem& problem, const Network& cert, bool certified);

}  // namespace certsynth
