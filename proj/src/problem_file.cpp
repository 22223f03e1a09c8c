#include "certsynth/problem_file.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "certsynth/format.hpp"

namespace certsynth {

namespace {

struct Value {
  enum class Kind { Number, String, Bool, Array } kind = Kind::Number;
  double number = 0.0;
  std::string text;  // string contents or number token
  bool boolean = false;
  std::vector<Value> items;
  int line = 0;
};

class Parser {
 public:
  Parser(std::string_view text, std::string source) : text_(text), source_(std::move(source)) {}

  struct Entry {
    std::string section;
    std::string key;
    Value value;
    int line;
  };

  void run(std::vector<Entry>& entries, std::map<std::string, int>& headers) {
    std::string section;
    while (true) {
      skip_blank_lines();
      if (at_end()) return;
      const int line = line_;
      if (peek() == '[') {
        ++pos_;
        section = dotted_name();
        expect(']');
        end_of_line();
        if (!headers.emplace(section, line).second) fail(line, "duplicate section [" + section + "]");
        continue;
      }
      const std::string key = peek() == '"' ? string_literal() : bare_name();
      if (key.empty()) fail(line, "expected a key");
      skip_spaces();
      expect('=');
      skip_spaces();
      Value v = value();
      end_of_line();
      entries.push_back(Entry{section, key, std::move(v), line});
    }
  }

  [[noreturn]] void fail(int line, const std::string& msg) const {
    throw Error(ErrorKind::MalformedProblem, source_ + ":" + std::to_string(line) + ": " + msg);
  }

 private:
  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return at_end() ? '\0' : text_[pos_]; }

  void skip_spaces() {
    while (!at_end() && (peek() == ' ' || peek() == '\t' || peek() == '\r')) ++pos_;
    if (peek() == '#') {
      while (!at_end() && peek() != '\n') ++pos_;
    }
  }
  // Whitespace, comments and newlines; used between lines and inside arrays.
  void skip_blank_lines() {
    while (true) {
      skip_spaces();
      if (peek() != '\n') return;
      ++pos_;
      ++line_;
    }
  }
  void end_of_line() {
    skip_spaces();
    if (at_end()) return;
    if (peek() != '\n') fail(line_, std::string("unexpected '") + peek() + "' after value");
    ++pos_;
    ++line_;
  }
  void expect(char c) {
    skip_spaces();
    if (peek() != c) fail(line_, std::string("expected '") + c + "'");
    ++pos_;
  }
  static bool name_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
  std::string bare_name() {
    const std::size_t start = pos_;
    while (!at_end() && name_char(peek())) ++pos_;
    return std::string(text_.substr(start, pos_ - start));
  }
  std::string dotted_name() {
    skip_spaces();
    std::string name = bare_name();
    while (peek() == '.') {
      ++pos_;
      const std::string part = bare_name();
      if (part.empty()) break;
      name += "." + part;
    }
    if (name.empty() || name.back() == '.') fail(line_, "malformed section name");
    return name;
  }
  std::string string_literal() {
    ++pos_;
    std::string out;
    while (true) {
      if (at_end() || peek() == '\n') fail(line_, "unterminated string");
      const char c = text_[pos_++];
      if (c == '"') return out;
      if (c == '\\') {
        if (at_end()) fail(line_, "unterminated string");
        const char e = text_[pos_++];
        if (e == 'n') {
          out += '\n';
        } else if (e == '"' || e == '\\') {
          out += e;
        } else {
          fail(line_, std::string("unknown escape \\") + e);
        }
      } else {
        out += c;
      }
    }
  }
  Value value() {
    Value v;
    v.line = line_;
    const char c = peek();
    if (c == '"') {
      v.kind = Value::Kind::String;
      v.text = string_literal();
    } else if (c == '[') {
      ++pos_;
      v.kind = Value::Kind::Array;
      skip_blank_lines();
      while (peek() != ']') {
        if (at_end()) fail(v.line, "unterminated array");
        v.items.push_back(value());
        skip_blank_lines();
        if (peek() == ',') {
          ++pos_;
          skip_blank_lines();
        } else if (peek() != ']') {
          fail(line_, "expected ',' or ']' in array");
        }
      }
      ++pos_;
    } else {
      const std::size_t start = pos_;
      while (!at_end() && (name_char(peek()) || peek() == '.' || peek() == '+' || peek() == '-')) ++pos_;
      const std::string token(text_.substr(start, pos_ - start));
      if (token.empty()) fail(line_, "expected a value");
      if (token == "true" || token == "false") {
        v.kind = Value::Kind::Bool;
        v.boolean = token == "true";
      } else {
        char* end = nullptr;
        v.number = std::strtod(token.c_str(), &end);
        if (end != token.c_str() + token.size() || !std::isfinite(v.number)) {
          fail(line_, "malformed value '" + token + "'");
        }
        v.text = token;
      }
    }
    return v;
  }

  std::string_view text_;
  std::string source_;
  std::size_t pos_ = 0;
  int line_ = 1;
};

class Reader {
 public:
  Reader(const Parser& parser, const Parser::Entry& e) : parser_(parser), e_(e) {}

  [[noreturn]] void fail(const std::string& msg) const {
    parser_.fail(e_.line, "'" + path() + "' " + msg);
  }
  std::string path() const { return e_.section.empty() ? e_.key : e_.section + "." + e_.key; }

  double number(const Value& v) const {
    if (v.kind != Value::Kind::Number) fail("expects a number");
    return v.number;
  }
  long long integer(const Value& v) const {
    const double d = number(v);
    if (d != std::floor(d) || std::fabs(d) > 9.0e15 || v.text.find_first_of(".eE") != std::string::npos) {
      fail("expects an integer");
    }
    return static_cast<long long>(d);
  }
  int int32(const Value& v) const {
    const long long n = integer(v);
    if (n < -2147483647LL || n > 2147483647LL) fail("is out of range");
    return static_cast<int>(n);
  }
  std::uint64_t unsigned64(const Value& v) const {
    if (v.kind != Value::Kind::Number || v.text.find_first_not_of("0123456789") != std::string::npos) {
      fail("expects a nonnegative integer");
    }
    try {
      return std::stoull(v.text);
    } catch (const std::exception&) {
      fail("is out of range");
    }
  }
  bool boolean(const Value& v) const {
    if (v.kind != Value::Kind::Bool) fail("expects true or false");
    return v.boolean;
  }
  std::string string(const Value& v) const {
    if (v.kind != Value::Kind::String) fail("expects a string");
    return v.text;
  }
  const std::vector<Value>& array(const Value& v) const {
    if (v.kind != Value::Kind::Array) fail("expects an array");
    return v.items;
  }
  std::vector<double> numbers(const Value& v) const {
    std::vector<double> out;
    for (const auto& x : array(v)) out.push_back(number(x));
    return out;
  }
  std::vector<int> ints(const Value& v) const {
    std::vector<int> out;
    for (const auto& x : array(v)) out.push_back(int32(x));
    return out;
  }
  std::vector<std::string> strings(const Value& v) const {
    std::vector<std::string> out;
    for (const auto& x : array(v)) out.push_back(string(x));
    return out;
  }
  std::vector<std::vector<double>> rows(const Value& v) const {
    std::vector<std::vector<double>> out;
    for (const auto& x : array(v)) out.push_back(numbers(x));
    return out;
  }

  const Value& value() const { return e_.value; }

 private:
  const Parser& parser_;
  const Parser::Entry& e_;
};

using Setter = std::function<void(const Reader&)>;

void add_set_keys(std::map<std::string, Setter>& keys, std::optional<RawSet>& target) {
  const auto set = [&target]() -> RawSet& {
    if (!target) target.emplace();
    return *target;
  };
  keys["lo"] = [set](const Reader& r) { set().lo = r.numbers(r.value()); };
  keys["hi"] = [set](const Reader& r) { set().hi = r.numbers(r.value()); };
  keys["constraints"] = [set](const Reader& r) { set().constraints = r.strings(r.value()); };
}

}  // namespace

int ProblemFile::line_of(const std::string& diagnostic_path) const {
  std::string p = diagnostic_path;
  const auto bracket = p.find('[');
  if (bracket != std::string::npos) p = p.substr(0, bracket);
  while (!p.empty()) {
    const auto it = lines.find(p);
    if (it != lines.end()) return it->second;
    const auto dot = p.rfind('.');
    if (dot == std::string::npos) break;
    p = p.substr(0, dot);
  }
  return 0;
}

ProblemFile parse_problem_file(std::string_view text, const std::string& source) {
  Parser parser(text, source);
  std::vector<Parser::Entry> entries;
  std::map<std::string, int> headers;
  parser.run(entries, headers);

  ProblemFile file;
  ProblemDescription& d = file.problem;
  CegisConfig& s = file.settings;
  std::optional<RawSet> domain;
  std::optional<RawShape> certificate;

  std::map<std::string, std::map<std::string, Setter>> table;
  table[""]["seed"] = [&](const Reader& r) { d.seed = r.unsigned64(r.value()); };

  auto& sys = table["system"];
  sys["kind"] = [&](const Reader& r) { d.system_kind = r.string(r.value()); };
  sys["n_state"] = [&](const Reader& r) { d.n_state = r.int32(r.value()); };
  sys["n_input"] = [&](const Reader& r) { d.n_input = r.int32(r.value()); };
  sys["dynamics"] = [&](const Reader& r) { d.dynamics = r.strings(r.value()); };
  sys["noise_points"] = [&](const Reader& r) { d.noise_points = r.rows(r.value()); };
  sys["noise_probabilities"] = [&](const Reader& r) { d.noise_probabilities = r.numbers(r.value()); };
  sys["input_lo"] = [&](const Reader& r) { d.input_lo = r.numbers(r.value()); };
  sys["input_hi"] = [&](const Reader& r) { d.input_hi = r.numbers(r.value()); };

  add_set_keys(table["domain"], domain);

  auto& spec = table["spec"];
  spec["kind"] = [&](const Reader& r) { d.spec_kind = r.string(r.value()); };
  spec["equilibrium"] = [&](const Reader& r) { d.equilibrium = r.numbers(r.value()); };
  spec["radius"] = [&](const Reader& r) { d.radius = r.number(r.value()); };
  spec["decrease"] = [&](const Reader& r) { d.decrease = r.number(r.value()); };
  spec["level"] = [&](const Reader& r) { d.level = r.number(r.value()); };
  spec["initial_points"] = [&](const Reader& r) { d.initial_points = r.rows(r.value()); };
  add_set_keys(table["spec.init"], d.init);
  add_set_keys(table["spec.unsafe"], d.unsafe);
  add_set_keys(table["spec.inv"], d.inv);
  add_set_keys(table["spec.target"], d.target);
  add_set_keys(table["spec.avoid"], d.avoid);

  const auto shape_keys = [](std::map<std::string, Setter>& keys, std::optional<RawShape>& target) {
    const auto get = [&target]() -> RawShape& {
      if (!target) target.emplace();
      return *target;
    };
    keys["widths"] = [get](const Reader& r) { get().widths = r.ints(r.value()); };
    keys["activations"] = [get](const Reader& r) { get().activations = r.strings(r.value()); };
  };
  shape_keys(table["certificate"], certificate);
  shape_keys(table["controller"], d.controller);

  auto& rules = table["rules"];
  rules["mu_pos"] = [&](const Reader& r) { d.mu_pos = r.number(r.value()); };
  rules["mu_dec"] = [&](const Reader& r) { d.mu_dec = r.number(r.value()); };
  rules["band"] = [&](const Reader& r) { d.band = r.number(r.value()); };
  rules["drift"] = [&](const Reader& r) { d.drift = r.number(r.value()); };
  rules["horizon"] = [&](const Reader& r) { d.horizon = r.int32(r.value()); };
  rules["init_level"] = [&](const Reader& r) { d.init_level = r.number(r.value()); };
  rules["check_domain_invariance"] = [&](const Reader& r) { d.check_domain_invariance = r.boolean(r.value()); };

  auto& train = table["train"];
  train["epochs"] = [&](const Reader& r) { s.train.epochs = r.int32(r.value()); };
  train["step"] = [&](const Reader& r) { s.train.step = r.number(r.value()); };
  train["power"] = [&](const Reader& r) { s.train.power = r.int32(r.value()); };
  train["kappa"] = [&](const Reader& r) { s.train.kappa = r.number(r.value()); };

  auto& verify = table["verify"];
  verify["w_min"] = [&](const Reader& r) { s.verify.w_min = r.number(r.value()); };
  verify["max_boxes"] = [&](const Reader& r) { s.verify.max_boxes = static_cast<long>(r.integer(r.value())); };
  verify["samples_per_box"] = [&](const Reader& r) { s.verify.samples_per_box = r.int32(r.value()); };
  verify["workers"] = [&](const Reader& r) { s.verify.workers = r.int32(r.value()); };
  verify["max_undecided_points"] = [&](const Reader& r) { s.verify.max_undecided_points = r.int32(r.value()); };

  auto& cegis = table["cegis"];
  cegis["max_iterations"] = [&](const Reader& r) { s.max_iterations = r.int32(r.value()); };
  cegis["samples_per_vc"] = [&](const Reader& r) { s.samples_per_vc = r.int32(r.value()); };
  cegis["spread"] = [&](const Reader& r) { s.spread = r.int32(r.value()); };
  cegis["spread_radius"] = [&](const Reader& r) { s.spread_radius = r.number(r.value()); };
  cegis["falsify_samples"] = [&](const Reader& r) { s.falsify_samples = r.int32(r.value()); };
  cegis["max_restarts"] = [&](const Reader& r) { s.max_restarts = r.int32(r.value()); };
  cegis["plateau_iterations"] = [&](const Reader& r) { s.plateau_iterations = r.int32(r.value()); };

  for (const auto& [name, line] : headers) {
    if (name != "train.margins" && !table.count(name)) parser.fail(line, "unknown section [" + name + "]");
    file.lines[name] = line;
  }
  std::set<std::string> seen;
  for (const auto& e : entries) {
    const Reader r(parser, e);
    if (!seen.insert(r.path()).second) r.fail("is given twice");
    file.lines[r.path()] = e.line;
    if (e.section == "train.margins") {
      s.train.margins[e.key] = r.number(e.value);
      continue;
    }
    const auto sec = table.find(e.section);
    const auto key = sec->second.find(e.key);
    if (key == sec->second.end()) {
      parser.fail(e.line, "unknown key '" + e.key + "' in " + (e.section.empty() ? "top level" : "[" + e.section + "]"));
    }
    key->second(r);
  }
  if (domain) d.domain = *domain;
  if (certificate) d.certificate = *certificate;
  s.seed = d.seed;
  s.verify.seed = d.seed;
  return file;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ProblemFile load_problem_file(const std::string& path) { return parse_problem_file(read_text_file(path), path); }

namespace {

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out + "\"";
}

std::string list(const std::vector<double>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + format_double(v[i]);
  return out + "]";
}
std::string list(const std::vector<int>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + std::to_string(v[i]);
  return out + "]";
}
std::string list(const std::vector<std::string>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + quote(v[i]);
  return out + "]";
}
std::string list(const std::vector<std::vector<double>>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + list(v[i]);
  return out + "]";
}

void write_set(std::ostream& out, const std::string& name, const RawSet& s) {
  out << "\n[" << name << "]\n";
  out << "lo = " << list(s.lo) << "\n";
  out << "hi = " << list(s.hi) << "\n";
  out << "constraints = " << list(s.constraints) << "\n";
}

void write_shape(std::ostream& out, const std::string& name, const RawShape& s) {
  out << "\n[" << name << "]\n";
  out << "widths = " << list(s.widths) << "\n";
  out << "activations = " << list(s.activations) << "\n";
}

}  // namespace

std::string serialize_problem_file(const ProblemFile& file) {
  const ProblemDescription& d = file.problem;
  const CegisConfig& s = file.settings;
  std::ostringstream out;
  out << "seed = " << d.seed << "\n";

  out << "\n[system]\n";
  out << "kind = " << quote(d.system_kind) << "\n";
  out << "n_state = " << d.n_state << "\n";
  out << "n_input = " << d.n_input << "\n";
  out << "dynamics = " << list(d.dynamics) << "\n";
  if (!d.noise_points.empty() || !d.noise_probabilities.empty()) {
    out << "noise_points = " << list(d.noise_points) << "\n";
    out << "noise_probabilities = " << list(d.noise_probabilities) << "\n";
  }
  if (!d.input_lo.empty() || !d.input_hi.empty()) {
    out << "input_lo = " << list(d.input_lo) << "\n";
    out << "input_hi = " << list(d.input_hi) << "\n";
  }
  write_set(out, "domain", d.domain);

  out << "\n[spec]\n";
  out << "kind = " << quote(d.spec_kind) << "\n";
  if (!d.equilibrium.empty()) out << "equilibrium = " << list(d.equilibrium) << "\n";
  if (d.radius) out << "radius = " << format_double(*d.radius) << "\n";
  if (d.decrease) out << "decrease = " << format_double(*d.decrease) << "\n";
  if (d.level) out << "level = " << format_double(*d.level) << "\n";
  if (!d.initial_points.empty()) out << "initial_points = " << list(d.initial_points) << "\n";
  const std::pair<const char*, const std::optional<RawSet>*> sets[] = {
      {"spec.init", &d.init}, {"spec.unsafe", &d.unsafe}, {"spec.inv", &d.inv},
      {"spec.target", &d.target}, {"spec.avoid", &d.avoid}};
  for (const auto& [name, set] : sets) {
    if (*set) write_set(out, name, **set);
  }

  write_shape(out, "certificate", d.certificate);
  if (d.controller) write_shape(out, "controller", *d.controller);

  out << "\n[rules]\n";
  if (d.mu_pos) out << "mu_pos = " << format_double(*d.mu_pos) << "\n";
  if (d.mu_dec) out << "mu_dec = " << format_double(*d.mu_dec) << "\n";
  if (d.band) out << "band = " << format_double(*d.band) << "\n";
  if (d.drift) out << "drift = " << format_double(*d.drift) << "\n";
  if (d.horizon) out << "horizon = " << *d.horizon << "\n";
  if (d.init_level) out << "init_level = " << format_double(*d.init_level) << "\n";
  if (d.check_domain_invariance) out << "check_domain_invariance = " << (*d.check_domain_invariance ? "true" : "false") << "\n";

  out << "\n[train]\n";
  out << "epochs = " << s.train.epochs << "\n";
  out << "step = " << format_double(s.train.step) << "\n";
  out << "power = " << s.train.power << "\n";
  out << "kappa = " << format_double(s.train.kappa) << "\n";
  if (!s.train.margins.empty()) {
    out << "\n[train.margins]\n";
    for (const auto& [id, m] : s.train.margins) out << quote(id) << " = " << format_double(m) << "\n";
  }

  out << "\n[verify]\n";
  out << "w_min = " << format_double(s.verify.w_min) << "\n";
  out << "max_boxes = " << s.verify.max_boxes << "\n";
  out << "samples_per_box = " << s.verify.samples_per_box << "\n";
  out << "workers = " << s.verify.workers << "\n";
  out << "max_undecided_points = " << s.verify.max_undecided_points << "\n";

  out << "\n[cegis]\n";
  out << "max_iterations = " << s.max_iterations << "\n";
  out << "samples_per_vc = " << s.samples_per_vc << "\n";
  out << "spread = " << s.spread << "\n";
  if (s.spread_radius) out << "spread_radius = " << format_double(*s.spread_radius) << "\n";
  out << "falsify_samples = " << s.falsify_samples << "\n";
  out << "max_restarts = " << s.max_restarts << "\n";
  out << "plateau_iterations = " << s.plateau_iterations << "\n";
  return out.str();
}

std::string canonical_problem_text(const Problem& problem, const CegisConfig& settings) {
  ProblemFile f;
  f.problem = describe(problem);
  f.settings = settings;
  return serialize_problem_file(f);
}

}  // namespace certsynth
