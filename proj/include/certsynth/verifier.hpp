#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "certsynth/rules.hpp"

namespace certsynth {

struct VerifierConfig {
  double w_min = 1e-3;  // relative to the width of the region's base box
  long max_boxes = 1000000;
  int samples_per_box = 3;  // midpoint plus random points
  int workers = 1;
  std::uint64_t seed = 0;
  int max_undecided_points = 64;  // midpoints kept for Unknown verdicts
};

enum class VerdictKind { Certified, Falsified, Unknown, ResourceExhausted };

std::string to_string(VerdictKind kind);

struct Verdict {
  VerdictKind kind = VerdictKind::Certified;
  std::string vc_id;
  Vector cex;             // Falsified
  double violation = 0;   // Falsified
  long undecided = 0;     // Unknown
  double smallest_width = 0;  // Unknown
  long boxes = 0;         // boxes processed
  std::vector<Vector> undecided_points;  // Unknown: region-member midpoints

  bool certified() const { return kind == VerdictKind::Certified; }
};

Verdict verify_vc(const VerificationCondition& vc, const VerifierConfig& config);

struct Counterexample {
  std::string vc_id;
  Vector point;
  double violation = 0;
};

// First sampled region member violating the condition, if any.
std::optional<Counterexample> falsify_random(const VerificationCondition& vc, int n, Rng& rng);

std::vector<std::pair<std::string, Verdict>> verify_all(const std::vector<VerificationCondition>& vcs,
                                                        const VerifierConfig& config);
bool all_certified(const std::vector<std::pair<std::string, Verdict>>& verdicts);

enum class SmtMode { Polynomial, DReal };

SmtMode parse_smt_mode(const std::string& name);

// Satisfiability query for the negation of the condition: sat models are
// counterexamples, unsat means the condition holds.
std::string export_smtlib(const VerificationCondition& vc, SmtMode mode);

// Exact decimal rendering of a double as an SMT-LIB real term.
std::string smt_real(double v);

}  // namespace certsynth
