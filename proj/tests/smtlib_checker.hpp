#pragma once

// Syntactic and sort checker for the SMT-LIB 2 subset produced by the
// exporter: commands, let, core and real arithmetic, transcendental builtins.

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace certsynth::testing {

class SmtChecker {
 public:
  // Empty on success, otherwise a message naming the first problem.
  static std::string check(const std::string& text) {
    SmtChecker c(text);
    try {
      c.script();
    } catch (const std::string& msg) {
      return msg.empty() ? "error" : msg;
    }
    return "";
  }

 private:
  enum class Kind { Open, Close, Numeral, Decimal, Symbol, Keyword, String };
  struct Token {
    Kind kind;
    std::string text;
    std::size_t pos;
  };
  enum class Sort { Real, Bool };

  explicit SmtChecker(const std::string& text) { tokenize(text); }

  [[noreturn]] void fail(const std::string& msg, std::size_t pos) const {
    throw msg + " at offset " + std::to_string(pos);
  }

  static bool symbol_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || std::string("~!@$%^&*_-+=<>.?/").find(c) != std::string::npos;
  }

  void tokenize(const std::string& s) {
    std::size_t i = 0;
    while (i < s.size()) {
      const char c = s[i];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
      } else if (c == ';') {
        while (i < s.size() && s[i] != '\n') ++i;
      } else if (c == '(' || c == ')') {
        tokens_.push_back({c == '(' ? Kind::Open : Kind::Close, std::string(1, c), i});
        ++i;
      } else if (c == '"') {
        std::size_t j = i + 1;
        while (j < s.size() && s[j] != '"') ++j;
        if (j >= s.size()) fail("unterminated string", i);
        tokens_.push_back({Kind::String, s.substr(i, j - i + 1), i});
        i = j + 1;
      } else if (c == '|') {
        const std::size_t j = s.find('|', i + 1);
        if (j == std::string::npos) fail("unterminated quoted symbol", i);
        tokens_.push_back({Kind::Symbol, s.substr(i + 1, j - i - 1), i});
        i = j + 1;
      } else if (std::isdigit(static_cast<unsigned char>(c))) {
        std::size_t j = i;
        while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
        Kind kind = Kind::Numeral;
        if (j < s.size() && s[j] == '.') {
          ++j;
          const std::size_t frac = j;
          while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
          if (j == frac) fail("decimal without fraction digits", i);
          kind = Kind::Decimal;
        }
        if (kind == Kind::Numeral && j - i > 1 && c == '0') fail("numeral with leading zero", i);
        if (j < s.size() && symbol_char(s[j])) fail("malformed number", i);
        tokens_.push_back({kind, s.substr(i, j - i), i});
        i = j;
      } else if (c == ':') {
        std::size_t j = i + 1;
        while (j < s.size() && symbol_char(s[j])) ++j;
        if (j == i + 1) fail("empty keyword", i);
        tokens_.push_back({Kind::Keyword, s.substr(i, j - i), i});
        i = j;
      } else if (symbol_char(c)) {
        std::size_t j = i;
        while (j < s.size() && symbol_char(s[j])) ++j;
        tokens_.push_back({Kind::Symbol, s.substr(i, j - i), i});
        i = j;
      } else {
        fail(std::string("unexpected character '") + c + "'", i);
      }
    }
  }

  const Token& peek() const {
    if (at_ >= tokens_.size()) fail("unexpected end of input", tokens_.empty() ? 0 : tokens_.back().pos);
    return tokens_[at_];
  }
  const Token& next() {
    const Token& t = peek();
    ++at_;
    return t;
  }
  void expect(Kind k, const char* what) {
    if (next().kind != k) fail(std::string("expected ") + what, tokens_[at_ - 1].pos);
  }
  std::string symbol() {
    const Token& t = next();
    if (t.kind != Kind::Symbol) fail("expected symbol", t.pos);
    return t.text;
  }
  Sort sort() {
    const Token& t = next();
    if (t.kind == Kind::Symbol && t.text == "Real") return Sort::Real;
    if (t.kind == Kind::Symbol && t.text == "Bool") return Sort::Bool;
    fail("unknown sort", t.pos);
  }
  void attribute_value() {
    const Token& t = next();
    if (t.kind == Kind::Open) {
      int depth = 1;
      while (depth > 0) {
        const Token& u = next();
        depth += u.kind == Kind::Open ? 1 : u.kind == Kind::Close ? -1 : 0;
      }
    } else if (t.kind == Kind::Close) {
      fail("missing attribute value", t.pos);
    }
  }

  void script() {
    bool logic = false;
    while (at_ < tokens_.size()) {
      expect(Kind::Open, "'(' starting a command");
      const Token& head = next();
      if (head.kind != Kind::Symbol) fail("expected command name", head.pos);
      const std::string& cmd = head.text;
      if (cmd == "set-option" || cmd == "set-info") {
        if (next().kind != Kind::Keyword) fail("expected keyword", tokens_[at_ - 1].pos);
        attribute_value();
      } else if (cmd == "set-logic") {
        if (logic) fail("set-logic given twice", head.pos);
        const std::string l = symbol();
        if (l != "QF_NRA" && l != "QF_NIRA" && l != "ALL") fail("unexpected logic " + l, head.pos);
        logic = true;
      } else if (cmd == "declare-const") {
        if (!logic) fail("declaration before set-logic", head.pos);
        const std::string name = symbol();
        if (globals_.count(name)) fail("redeclared " + name, head.pos);
        globals_[name] = sort();
      } else if (cmd == "assert") {
        if (!logic) fail("assert before set-logic", head.pos);
        std::vector<std::map<std::string, Sort>> scopes;
        if (term(scopes) != Sort::Bool) fail("assertion is not Boolean", head.pos);
      } else if (cmd == "check-sat" || cmd == "get-model" || cmd == "exit") {
      } else {
        fail("unknown command " + cmd, head.pos);
      }
      expect(Kind::Close, "')' closing the command");
    }
  }

  std::optional<Sort> lookup(const std::vector<std::map<std::string, Sort>>& scopes, const std::string& name) const {
    for (auto it = scopes.rbegin(); it != scopes.rend(); ++it) {
      const auto f = it->find(name);
      if (f != it->end()) return f->second;
    }
    const auto g = globals_.find(name);
    if (g != globals_.end()) return g->second;
    if (name == "true" || name == "false") return Sort::Bool;
    return std::nullopt;
  }

  Sort term(std::vector<std::map<std::string, Sort>>& scopes) {
    const Token& t = next();
    switch (t.kind) {
      case Kind::Numeral:
      case Kind::Decimal: return Sort::Real;
      case Kind::Symbol: {
        const auto s = lookup(scopes, t.text);
        if (!s) fail("undeclared symbol " + t.text, t.pos);
        return *s;
      }
      case Kind::Open: break;
      default: fail("unexpected token '" + t.text + "'", t.pos);
    }
    const Token& head = next();
    if (head.kind != Kind::Symbol) fail("expected function symbol", head.pos);
    if (head.text == "let") {
      expect(Kind::Open, "'(' opening let bindings");
      std::map<std::string, Sort> frame;
      int count = 0;
      while (peek().kind == Kind::Open) {
        next();
        const std::string name = symbol();
        if (frame.count(name)) fail("duplicate let binding " + name, head.pos);
        frame[name] = term(scopes);
        expect(Kind::Close, "')' closing a binding");
        ++count;
      }
      if (count == 0) fail("empty let", head.pos);
      expect(Kind::Close, "')' closing let bindings");
      scopes.push_back(std::move(frame));
      const Sort body = term(scopes);
      scopes.pop_back();
      expect(Kind::Close, "')' closing let");
      return body;
    }
    std::vector<Sort> args;
    while (peek().kind != Kind::Close) args.push_back(term(scopes));
    next();
    const std::string& f = head.text;
    const auto all = [&](Sort s) {
      for (Sort a : args) {
        if (a != s) return false;
      }
      return true;
    };
    const auto need = [&](bool ok, const char* what) {
      if (!ok) fail(f + ": " + what, head.pos);
    };
    static const std::set<std::string> arith = {"+", "*", "/"};
    static const std::set<std::string> compare = {"<=", ">=", "<", ">"};
    static const std::set<std::string> unary = {"exp", "sin", "cos", "tanh", "abs"};
    if (arith.count(f)) {
      need(args.size() >= 2 && all(Sort::Real), "needs >= 2 Real arguments");
      return Sort::Real;
    }
    if (f == "-") {
      need(!args.empty() && all(Sort::Real), "needs Real arguments");
      return Sort::Real;
    }
    if (compare.count(f)) {
      need(args.size() >= 2 && all(Sort::Real), "needs >= 2 Real arguments");
      return Sort::Bool;
    }
    if (unary.count(f)) {
      need(args.size() == 1 && all(Sort::Real), "needs one Real argument");
      return Sort::Real;
    }
    if (f == "and" || f == "or") {
      need(args.size() >= 2 && all(Sort::Bool), "needs >= 2 Bool arguments");
      return Sort::Bool;
    }
    if (f == "not") {
      need(args.size() == 1 && all(Sort::Bool), "needs one Bool argument");
      return Sort::Bool;
    }
    if (f == "=") {
      need(args.size() >= 2 && all(args.front()), "needs >= 2 arguments of one sort");
      return Sort::Bool;
    }
    if (f == "ite") {
      need(args.size() == 3 && args[0] == Sort::Bool && args[1] == args[2], "needs (Bool, T, T)");
      return args[1];
    }
    fail("unknown function " + f, head.pos);
  }

  std::vector<Token> tokens_;
  std::size_t at_ = 0;
  std::map<std::string, Sort> globals_;
};

// z3 or cvc5 from PATH, if installed.
inline std::optional<std::string> find_solver() {
  const char* path = std::getenv("PATH");
  if (!path) return std::nullopt;
  const std::string dirs(path);
  for (const char* name : {"z3", "cvc5"}) {
    std::size_t start = 0;
    while (start <= dirs.size()) {
      const std::size_t end = std::min(dirs.find(':', start), dirs.size());
      const std::string dir = dirs.substr(start, end - start);
      if (!dir.empty() && std::filesystem::exists(std::filesystem::path(dir) / name)) {
        return (std::filesystem::path(dir) / name).string();
      }
      start = end + 1;
    }
  }
  return std::nullopt;
}

// First line of the solver's answer ("sat", "unsat", ...).
inline std::string run_solver(const std::string& solver, const std::string& script) {
  const auto file = std::filesystem::temp_directory_path() / "certsynth_query.smt2";
  std::ofstream(file) << script;
  const std::string cmd = solver + " " + file.string();
  FILE* pipe = popen(cmd.c_str(), "r");
  std::string out;
  char buf[256];
  while (pipe && fgets(buf, sizeof buf, pipe)) out += buf;
  if (pipe) pclose(pipe);
  return out.substr(0, out.find('\n'));
}

}  // namespace certsynth::testing
