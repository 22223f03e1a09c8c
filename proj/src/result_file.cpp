#include "certsynth/result_file.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>

#include "certsynth/problem_file.hpp"

namespace certsynth {

using nlohmann::json;

std::string sha256_hex(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), md, &len) != 1) {
    throw Error(ErrorKind::IoError, "sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

namespace {

json vec_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

// json has no NaN or infinity
json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string network_text(const Network& n) {
  std::ostringstream out;
  write_network(out, n);
  return out.str();
}

Network network_from(const std::string& text) {
  std::istringstream in(text);
  return read_network(in);
}

}  // namespace

json verdicts_json(const std::vector<std::pair<std::string, Verdict>>& verdicts) {
  json out = json::array();
  for (const auto& [id, v] : verdicts) {
    json j{{"id", id}, {"verdict", to_string(v.kind)}, {"boxes", v.boxes}};
    if (v.kind == VerdictKind::Falsified) {
      j["counterexample"] = vec_json(v.cex);
      j["violation"] = num(v.violation);
    }
    if (v.kind == VerdictKind::Unknown || v.kind == VerdictKind::ResourceExhausted) {
      j["undecided_boxes"] = v.undecided;
      j["smallest_width"] = num(v.smallest_width);
    }
    out.push_back(std::move(j));
  }
  return out;
}

json bounds_json(const std::vector<ProbabilityBound>& bounds) {
  json out = json::array();
  for (const auto& b : bounds) {
    json j{{"where", b.where}, {"value", num(b.value)}, {"vacuous", b.vacuous},
           {"advisory", b.advisory}, {"informational", b.informational}};
    if (b.point.size() > 0) j["point"] = vec_json(b.point);
    out.push_back(std::move(j));
  }
  return out;
}

json result_json(const Problem& problem, const CegisResult& result, const std::string& problem_digest,
                 const std::optional<ResultTimings>& timings) {
  json doc;
  doc["tool"] = kToolName;
  doc["version"] = kToolVersion;
  doc["problem_digest"] = problem_digest;
  doc["status"] = to_string(result.status);
  doc["spec"] = spec_name(problem.spec);
  doc["n_state"] = problem.system.n_state;
  doc["n_input"] = problem.system.n_input;
  doc["domain"] = {{"lo", vec_json(box_lo(problem.domain.base))}, {"hi", vec_json(box_hi(problem.domain.base))}};
  doc["verdicts"] = verdicts_json(result.verdicts);
  doc["bounds"] = bounds_json(result.bounds);
  doc["certificate"] = network_text(result.cert);
  doc["controller"] = result.ctrl ? json(network_text(*result.ctrl)) : json(nullptr);
  doc["restarts"] = result.restarts;
  json its = json::array();
  for (const auto& it : result.iterations) {
    json j{{"iteration", it.iteration}, {"loss", num(it.loss)}, {"epochs", it.epochs},
           {"screened", it.screened}, {"restarted", it.restarted},
           {"counterexamples", it.counterexamples.size()},
           {"pseudo_counterexamples", it.pseudo_counterexamples},
           {"dataset_sizes", it.dataset_sizes}};
    long boxes = 0;
    for (const auto& [id, v] : it.verdicts) boxes += v.boxes;
    j["boxes"] = boxes;
    if (!it.error.empty()) j["error"] = it.error;
    if (timings) {
      j["train_seconds"] = it.train_seconds;
      j["verify_seconds"] = it.verify_seconds;
    }
    its.push_back(std::move(j));
  }
  doc["iterations"] = its;
  if (timings) doc["timings"] = {{"total_seconds", timings->total_seconds}};
  return doc;
}

std::string dump_result(const json& doc) { return doc.dump(2) + "\n"; }

StoredResult parse_result(const std::string& text, const std::string& source) {
  const auto bad = [&](const std::string& msg) { return Error(ErrorKind::MalformedProblem, source + ": " + msg); };
  try {
    json d = json::parse(text);
    std::optional<Network> ctrl;
    if (!d.at("controller").is_null()) ctrl = network_from(d.at("controller").get<std::string>());
    StoredResult r{d.at("problem_digest").get<std::string>(),
                   d.at("status").get<std::string>(),
                   network_from(d.at("certificate").get<std::string>()),
                   std::move(ctrl),
                   d.at("domain").at("lo").get<std::vector<double>>(),
                   d.at("domain").at("hi").get<std::vector<double>>(),
                   d.at("n_state").get<int>(),
                   d.at("n_input").get<int>(),
                   d};
    if (r.domain_lo.size() != static_cast<std::size_t>(r.n_state) || r.domain_hi.size() != r.domain_lo.size()) {
      throw bad("domain does not match n_state");
    }
    return r;
  } catch (const json::exception& e) {
    throw bad(e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::MalformedProblem) throw;
    throw bad(e.what());
  }
}

StoredResult load_result_file(const std::string& path) { return parse_result(read_text_file(path), path); }

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
  out << text;
  if (!out) throw Error(ErrorKind::IoError, "write failed: " + path);
}

}  // namespace certsynth
