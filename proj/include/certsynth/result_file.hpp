#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "certsynth/cegis.hpp"

namespace certsynth {

inline constexpr const char* kToolName = "certsynth";
inline constexpr const char* kToolVersion = "0.1.0";

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);

struct ResultTimings {
  double total_seconds = 0.0;
};

// Timings are left out when absent so sequential runs produce identical bytes.
nlohmann::json result_json(const Problem& problem, const CegisResult& result, const std::string& problem_digest,
                           const std::optional<ResultTimings>& timings);

nlohmann::json verdicts_json(const std::vector<std::pair<std::string, Verdict>>& verdicts);
nlohmann::json bounds_json(const std::vector<ProbabilityBound>& bounds);

// What check, grid and export-smt need back from a result file.
struct StoredResult {
  std::string problem_digest;
  std::string status;
  Network cert;
  std::optional<Network> ctrl;
  std::vector<double> domain_lo, domain_hi;
  int n_state = 0;
  int n_input = 0;
  nlohmann::json document;
};

StoredResult parse_result(const std::string& text, const std::string& source = "<result>");
StoredResult load_result_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

// Pretty-printed with a trailing newline.
std::string dump_result(const nlohmann::json& doc);

}  // namespace certsynth
