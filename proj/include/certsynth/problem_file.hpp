#pragma once

#include <map>
#include <string>
#include <string_view>

#include "certsynth/cegis.hpp"

namespace certsynth {

// Contents of a problem file: the problem plus run settings.
//
//   seed = 0
//   [system]      kind, n_state, n_input, dynamics, noise_points,
//                 noise_probabilities, input_lo, input_hi
//   [domain]      lo, hi, constraints
//   [spec]        kind, equilibrium, radius, decrease, level, initial_points
//   [spec.init] [spec.unsafe] [spec.inv] [spec.target] [spec.avoid]
//                 lo, hi, constraints
//   [certificate] [controller]   widths, activations
//   [rules]       mu_pos, mu_dec, band, drift, horizon, init_level,
//                 check_domain_invariance
//   [train]       epochs, step, power, kappa
//   [train.margins]  "<condition id>" = margin
//   [verify]      w_min, max_boxes, samples_per_box, workers,
//                 max_undecided_points
//   [cegis]       max_iterations, samples_per_vc, spread, spread_radius,
//                 falsify_samples, max_restarts, plateau_iterations
struct ProblemFile {
  ProblemDescription problem;
  CegisConfig settings;  // trace stream unused here
  // "section.key" -> line, for pointing diagnostics at the file.
  std::map<std::string, int> lines;

  int line_of(const std::string& diagnostic_path) const;
};

// Throws MalformedProblem with "source:line: message" on syntax errors,
// unknown sections or keys, duplicates and wrongly typed values.
ProblemFile parse_problem_file(std::string_view text, const std::string& source = "<input>");
ProblemFile load_problem_file(const std::string& path);

// Canonical text: every section in a fixed order, numbers with 17
// significant digits.
std::string serialize_problem_file(const ProblemFile& file);

// Canonical form of a validated problem with the given settings.
std::string canonical_problem_text(const Problem& problem, const CegisConfig& settings);

std::string read_text_file(const std::string& path);

}  // namespace certsynth
