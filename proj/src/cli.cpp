#include "certsynth/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>

#include "certsynth/format.hpp"
#include "certsynth/problem_file.hpp"
#include "certsynth/result_file.hpp"

namespace certsynth {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  bool sequential = false;
  bool json = false;
};

struct Budget {
  std::optional<int> max_iters;
  std::optional<int> epochs;
};

struct Loaded {
  std::string text;
  ProblemFile file;
  Problem problem;
};

// Input problems that cannot be run map to exit code 2.
struct BadInput {
  std::string message;
};

Loaded load(const std::string& path, const Globals& g, const Budget& b = {}) {
  Loaded l;
  try {
    l.text = read_text_file(path);
    l.file = parse_problem_file(l.text, path);
  } catch (const Error& e) {
    throw BadInput{e.what()};
  }
  ProblemFile& f = l.file;
  if (g.seed) {
    f.problem.seed = *g.seed;
    f.settings.seed = *g.seed;
    f.settings.verify.seed = *g.seed;
  }
  if (g.workers) f.settings.verify.workers = *g.workers;
  if (g.sequential) f.settings.verify.workers = 1;
  if (b.max_iters) f.settings.max_iterations = *b.max_iters;
  if (b.epochs) f.settings.train.epochs = *b.epochs;
  try {
    l.problem = validate_problem(f.problem);
    f.settings.validate();
  } catch (const InvalidProblemError& e) {
    std::string msg;
    for (const auto& d : e.diagnostics()) {
      const int line = f.line_of(d.path);
      msg += path + (line > 0 ? ":" + std::to_string(line) : "") + ": " + d.path + ": " + d.message + "\n";
    }
    if (!msg.empty()) msg.pop_back();
    throw BadInput{msg};
  } catch (const Error& e) {
    throw BadInput{path + ": " + e.what()};
  }
  return l;
}

StoredResult load_result(const std::string& path) {
  try {
    return load_result_file(path);
  } catch (const Error& e) {
    throw BadInput{e.what()};
  }
}

std::string default_output(const std::string& problem_path) {
  fs::path p(problem_path);
  p.replace_extension(".result.json");
  return p.string();
}

void print_verdicts(std::ostream& out, const std::vector<std::pair<std::string, Verdict>>& verdicts) {
  for (const auto& [id, v] : verdicts) {
    out << "  " << id << "  " << to_string(v.kind) << "  boxes=" << v.boxes;
    if (v.kind == VerdictKind::Falsified) out << "  violation=" << format_double(v.violation);
    if (v.kind == VerdictKind::Unknown || v.kind == VerdictKind::ResourceExhausted) {
      out << "  undecided=" << v.undecided;
    }
    out << "\n";
  }
}

void print_bounds(std::ostream& out, const std::vector<ProbabilityBound>& bounds) {
  for (const auto& b : bounds) {
    out << "  bound " << b.where << " = " << format_double(b.value);
    if (b.informational) out << " (expected-time style, not a probability)";
    if (b.vacuous) out << " (vacuous)";
    if (b.advisory) out << " (advisory: not certified)";
    out << "\n";
  }
}

long total_boxes(const CegisResult& r) {
  long n = 0;
  for (const auto& it : r.iterations) {
    for (const auto& [id, v] : it.verdicts) n += v.boxes;
  }
  return n;
}

int cmd_synth(const Globals& g, const Budget& b, const std::string& problem_path, std::string output,
              const std::string& trace_path, std::ostream& out) {
  Loaded l = load(problem_path, g, b);
  std::ofstream trace;
  if (!trace_path.empty()) {
    trace.open(trace_path);
    if (!trace) throw BadInput{"cannot write " + trace_path};
    l.file.settings.trace = &trace;
  }
  const auto start = Clock::now();
  const CegisResult result = run_cegis(l.problem, l.file.settings);
  const double seconds = std::chrono::duration<double>(Clock::now() - start).count();

  std::optional<ResultTimings> timings;
  if (!g.sequential) timings = ResultTimings{seconds};
  const json doc = result_json(l.problem, result, sha256_hex(l.text), timings);
  if (output.empty()) output = default_output(problem_path);
  write_text_file(output, dump_result(doc));

  if (g.json) {
    out << json{{"status", doc["status"]}, {"iterations", result.iterations.size()}, {"verdicts", doc["verdicts"]},
                {"bounds", doc["bounds"]}, {"result", output}}
               .dump()
        << "\n";
  } else {
    out << "status: " << to_string(result.status) << "\n";
    out << "iterations: " << result.iterations.size() << "  restarts: " << result.restarts << "\n";
    print_verdicts(out, result.verdicts);
    print_bounds(out, result.bounds);
    out << "result: " << output << "\n";
  }
  return result.status == CegisStatus::Certified ? 0 : 1;
}

int cmd_check(const Globals& g, const std::string& problem_path, const std::string& result_path,
              std::ostream& out, std::ostream& err) {
  const Loaded l = load(problem_path, g);
  const StoredResult r = load_result(result_path);
  if (r.problem_digest != sha256_hex(l.text)) {
    err << "warning: " << result_path << " was produced from a different problem file\n";
  }
  CheckResult c;
  try {
    c = check_certificate(l.problem, r.cert, r.ctrl ? &*r.ctrl : nullptr, l.file.settings.verify);
  } catch (const Error& e) {
    throw BadInput{std::string("certificate does not fit the problem: ") + e.what()};
  }
  const bool ok = c.certified();
  if (g.json) {
    out << json{{"status", ok ? "Certified" : "NotCertified"}, {"verdicts", verdicts_json(c.verdicts)},
                {"bounds", bounds_json(c.bounds)}}
               .dump()
        << "\n";
  } else {
    out << "status: " << (ok ? "Certified" : "NotCertified") << "\n";
    print_verdicts(out, c.verdicts);
    print_bounds(out, c.bounds);
  }
  return ok ? 0 : 1;
}

int cmd_export_smt(const Globals& g, const std::string& problem_path, const std::string& result_path,
                   const std::string& vc_id, const std::string& mode_name, const std::string& output,
                   std::ostream& out) {
  const Loaded l = load(problem_path, g);
  const StoredResult r = load_result(result_path);
  SmtMode mode;
  try {
    mode = parse_smt_mode(mode_name);
  } catch (const Error& e) {
    throw BadInput{e.what()};
  }
  std::vector<VerificationCondition> vcs;
  try {
    vcs = compile_rules(l.problem, r.cert, r.ctrl ? &*r.ctrl : nullptr);
  } catch (const Error& e) {
    throw BadInput{std::string("certificate does not fit the problem: ") + e.what()};
  }
  const auto it = std::find_if(vcs.begin(), vcs.end(), [&](const auto& vc) { return vc.id == vc_id; });
  if (it == vcs.end()) {
    std::string ids;
    for (const auto& vc : vcs) ids += (ids.empty() ? "" : ", ") + vc.id;
    throw BadInput{"unknown condition '" + vc_id + "'; valid ids: " + ids};
  }
  std::string text;
  try {
    text = export_smtlib(*it, mode);
  } catch (const Error& e) {
    throw BadInput{e.what()};
  }
  if (output == "-") {
    out << text;
  } else {
    write_text_file(output, text);
  }
  return 0;
}

int cmd_grid(const std::string& result_path, std::vector<int> resolution, std::ostream& out) {
  const StoredResult r = load_result(result_path);
  const int n = r.n_state;
  if (n < 1 || n > 3) throw BadInput{"grid needs 1 to 3 state dimensions, got " + std::to_string(n)};
  if (resolution.size() == 1) resolution.assign(n, resolution.front());
  if (static_cast<int>(resolution.size()) != n) {
    throw BadInput{"expected 1 or " + std::to_string(n) + " resolutions"};
  }
  for (int k : resolution) {
    if (k < 1) throw BadInput{"resolution must be positive"};
  }
  std::vector<int> idx(n, 0);
  Vector x(n);
  while (true) {
    for (int i = 0; i < n; ++i) {
      const double lo = r.domain_lo[i], hi = r.domain_hi[i];
      x[i] = resolution[i] == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * idx[i] / (resolution[i] - 1);
      out << format_double(x[i]) << ",";
    }
    out << format_double(forward(r.cert, x)[0]);
    if (r.ctrl) {
      const Vector u = forward(*r.ctrl, x);
      for (Eigen::Index j = 0; j < u.size(); ++j) out << "," << format_double(u[j]);
    }
    out << "\n";
    int i = n - 1;
    while (i >= 0 && ++idx[i] == resolution[i]) idx[i--] = 0;
    if (i < 0) break;
  }
  return 0;
}

int cmd_bench(const Globals& g, const Budget& b, const std::string& dir, std::ostream& out, std::ostream& err) {
  std::vector<fs::path> files;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(dir, ec)) {
    if (e.is_regular_file() && e.path().extension() == ".toml") files.push_back(e.path());
  }
  if (ec) throw BadInput{"cannot read directory " + dir};
  if (files.empty()) throw BadInput{"no problem files (*.toml) in " + dir};
  std::sort(files.begin(), files.end());

  bool errored = false;
  json rows = json::array();
  if (!g.json) out << "problem,status,iterations,boxes,seconds\n";
  for (const auto& path : files) {
    const std::string name = path.filename().string();
    json row{{"problem", name}};
    const auto start = Clock::now();
    try {
      const Loaded l = load(path.string(), g, b);
      const CegisResult r = run_cegis(l.problem, l.file.settings);
      row["status"] = to_string(r.status);
      row["iterations"] = r.iterations.size();
      row["boxes"] = total_boxes(r);
    } catch (const BadInput& e) {
      errored = true;
      row["status"] = "ERROR";
      err << e.message << "\n";
    } catch (const Error& e) {
      errored = true;
      row["status"] = "ERROR";
      err << path.string() << ": " << e.what() << "\n";
    }
    row["seconds"] = std::chrono::duration<double>(Clock::now() - start).count();
    if (g.json) {
      rows.push_back(row);
    } else {
      out << name << "," << row["status"].get<std::string>() << ",";
      if (row.contains("iterations")) out << row["iterations"] << "," << row["boxes"];
      else out << ",";
      char secs[32];
      std::snprintf(secs, sizeof secs, "%.3f", row["seconds"].get<double>());
      out << "," << secs << "\n";
    }
  }
  if (g.json) out << rows.dump() << "\n";
  return errored ? 1 : 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Certificate synthesis for dynamical systems", "certsynth"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  std::uint64_t seed = 0;
  int workers = 1;
  auto* seed_opt = app.add_option("--seed", seed, "Override the problem seed");
  auto* workers_opt = app.add_option("--workers", workers, "Verifier worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--sequential", g.sequential, "One worker, no timings; result files are byte-reproducible");
  app.add_flag("--json", g.json, "Machine-readable output");

  Budget budget;
  int max_iters = 0, epochs = 0;
  std::string problem_path, result_path, output, smt_output = "-", trace_path, vc_id, mode = "polynomial", dir;
  std::vector<int> resolution;

  auto* synth = app.add_subcommand("synth", "Run the synthesis loop and write a result file");
  synth->add_option("problem", problem_path, "Problem file")->required();
  synth->add_option("-o,--output", output, "Result file (default: <problem>.result.json)");
  synth->add_option("--trace", trace_path, "Write the epoch trace CSV here");
  auto* synth_iters = synth->add_option("--max-iters", max_iters, "Iteration budget")->check(CLI::NonNegativeNumber);
  auto* synth_epochs = synth->add_option("--epochs", epochs, "Epochs per iteration")->check(CLI::NonNegativeNumber);

  auto* check = app.add_subcommand("check", "Re-verify a stored certificate");
  check->add_option("problem", problem_path, "Problem file")->required();
  check->add_option("result", result_path, "Result file")->required();

  auto* smt = app.add_subcommand("export-smt", "Write one condition as an SMT-LIB 2 query");
  smt->add_option("problem", problem_path, "Problem file")->required();
  smt->add_option("result", result_path, "Result file")->required();
  smt->add_option("vc", vc_id, "Condition id")->required();
  smt->add_option("--mode", mode, "polynomial or dreal");
  smt->add_option("-o,--output", smt_output, "Output path, - for standard output (default)");

  auto* grid = app.add_subcommand("grid", "Sample the certificate on a lattice over the domain (CSV)");
  grid->add_option("result", result_path, "Result file")->required();
  grid->add_option("resolution", resolution, "Points per axis, one value or one per axis")->required();

  auto* bench = app.add_subcommand("bench", "Run every problem file in a directory");
  bench->add_option("dir", dir, "Directory of problem files")->required();
  auto* bench_iters = bench->add_option("--max-iters", max_iters, "Iteration budget")->check(CLI::NonNegativeNumber);
  auto* bench_epochs = bench->add_option("--epochs", epochs, "Epochs per iteration")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return 2;
  }
  if (*seed_opt) g.seed = seed;
  if (*workers_opt) g.workers = workers;
  if (*synth_iters || *bench_iters) budget.max_iters = max_iters;
  if (*synth_epochs || *bench_epochs) budget.epochs = epochs;

  try {
    if (*synth) return cmd_synth(g, budget, problem_path, output, trace_path, out);
    if (*check) return cmd_check(g, problem_path, result_path, out, err);
    if (*smt) return cmd_export_smt(g, problem_path, result_path, vc_id, mode, smt_output, out);
    if (*grid) return cmd_grid(result_path, resolution, out);
    if (*bench) return cmd_bench(g, budget, dir, out, err);
  } catch (const BadInput& e) {
    err << "error: " << e.message << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace certsynth
