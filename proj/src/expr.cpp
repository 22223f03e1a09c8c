#include "certsynth/expr.hpp"

#include <bit>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cmath>

#include "certsynth/format.hpp"

namespace certsynth {

namespace {

std::shared_ptr<const Expr::Node> make_node(Op op, double value, int index, int exponent, std::vector<Expr> args) {
  auto n = std::make_shared<Expr::Node>();
  n->op = op;
  n->value = value;
  n->index = index;
  n->exponent = exponent;
  n->args = std::move(args);
  return n;
}

// Little-endian base-1e9 natural number, just enough for exact decimals.
class Digits {
 public:
  explicit Digits(std::uint64_t v) {
    do {
      limbs_.push_back(static_cast<std::uint32_t>(v % kBase));
      v /= kBase;
    } while (v > 0);
  }

  void multiply(std::uint32_t k) {
    std::uint64_t carry = 0;
    for (auto& limb : limbs_) {
      const std::uint64_t t = static_cast<std::uint64_t>(limb) * k + carry;
      limb = static_cast<std::uint32_t>(t % kBase);
      carry = t / kBase;
    }
    while (carry > 0) {
      limbs_.push_back(static_cast<std::uint32_t>(carry % kBase));
      carry /= kBase;
    }
  }

  std::string str() const {
    std::string s = std::to_string(limbs_.back());
    char buf[16];
    for (std::size_t i = limbs_.size() - 1; i-- > 0;) {
      std::snprintf(buf, sizeof buf, "%09u", limbs_[i]);
      s += buf;
    }
    return s;
  }

 private:
  static constexpr std::uint64_t kBase = 1000000000ULL;
  std::vector<std::uint32_t> limbs_;
};

// Decimal as (significant digits without leading/trailing zeros, power of ten).
std::pair<std::string, long> normalize_decimal(std::string digits, long exp10) {
  const auto first = digits.find_first_not_of('0');
  if (first == std::string::npos) return {"", 0};
  digits.erase(0, first);
  while (digits.back() == '0') {
    digits.pop_back();
    ++exp10;
  }
  return {digits, exp10};
}

// Whether the literal text (unsigned, as accepted by strtod) denotes v exactly.
bool literal_is_exact(std::string_view text, double v) {
  if (!std::isfinite(v)) return false;
  std::string digits;
  long exp10 = 0;
  std::size_t i = 0;
  for (; i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])); ++i) digits += text[i];
  if (i < text.size() && text[i] == '.') {
    for (++i; i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])); ++i) {
      digits += text[i];
      --exp10;
    }
  }
  if (i < text.size() && (text[i] == 'e' || text[i] == 'E')) {
    exp10 += std::strtol(std::string(text.substr(i + 1)).c_str(), nullptr, 10);
  }
  const std::string exact = exact_decimal(v);
  const auto dot = exact.find('.');
  const auto want = normalize_decimal(exact.substr(0, dot) + exact.substr(dot + 1),
                                      -static_cast<long>(exact.size() - dot - 1));
  return normalize_decimal(digits, exp10) == want;
}

bool is_unary(Op op) {
  switch (op) {
    case Op::Neg:
    case Op::Exp:
    case Op::Sin:
    case Op::Cos:
    case Op::Tanh:
    case Op::Abs:
      return true;
    default:
      return false;
  }
}

bool is_binary(Op op) {
  switch (op) {
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div:
    case Op::Min:
    case Op::Max:
      return true;
    default:
      return false;
  }
}

const char* function_name(Op op) {
  switch (op) {
    case Op::Exp: return "exp";
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Tanh: return "tanh";
    case Op::Abs: return "abs";
    case Op::Min: return "min";
    case Op::Max: return "max";
    default: return nullptr;
  }
}

VarKind kind_of(Op op) {
  switch (op) {
    case Op::StateVar: return VarKind::State;
    case Op::InputVar: return VarKind::Input;
    default: return VarKind::Noise;
  }
}

Op op_of(VarKind kind) {
  switch (kind) {
    case VarKind::State: return Op::StateVar;
    case VarKind::Input: return Op::InputVar;
    case VarKind::Noise: return Op::NoiseVar;
  }
  return Op::StateVar;
}

bool is_var(Op op) { return op == Op::StateVar || op == Op::InputVar || op == Op::NoiseVar; }

class Parser {
 public:
  Parser(std::string_view text, const Dims& dims) : text_(text), dims_(dims) {}

  Expr parse() {
    Expr e = expr();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected trailing input");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg, ErrorKind kind = ErrorKind::SyntaxError) const {
    throw Error(kind, "at position " + std::to_string(pos_ + 1) + " in \"" + std::string(text_) + "\": " + msg);
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  Expr expr() {
    Expr lhs = term();
    for (;;) {
      if (accept('+')) {
        lhs = Expr::binary(Op::Add, lhs, term());
      } else if (accept('-')) {
        lhs = Expr::binary(Op::Sub, lhs, term());
      } else {
        return lhs;
      }
    }
  }

  Expr term() {
    Expr lhs = factor();
    for (;;) {
      if (accept('*')) {
        lhs = Expr::binary(Op::Mul, lhs, factor());
      } else if (accept('/')) {
        lhs = Expr::binary(Op::Div, lhs, factor());
      } else {
        return lhs;
      }
    }
  }

  Expr factor() {
    Expr base;
    if (accept('-')) {
      skip_ws();
      const bool literal = pos_ < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.');
      base = literal ? -number() : Expr::unary(Op::Neg, atom());
    } else {
      base = atom();
    }
    if (accept('^')) {
      skip_ws();
      const std::size_t start = pos_;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      if (start == pos_) fail("expected a nonnegative integer exponent");
      const long p = std::strtol(std::string(text_.substr(start, pos_ - start)).c_str(), nullptr, 10);
      if (p > 1024) fail("exponent too large");
      base = Expr::pow(base, static_cast<int>(p));
    }
    return base;
  }

  Expr atom() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = expr();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c))) return identifier();
    fail(std::string("unexpected character '") + c + "'");
  }

  Expr number() {
    const std::string rest(text_.substr(pos_));
    char* end = nullptr;
    const double v = std::strtod(rest.c_str(), &end);
    if (end == rest.c_str()) fail("malformed number");
    const auto len = static_cast<std::size_t>(end - rest.c_str());
    pos_ += len;
    return Expr::constant(v, literal_is_exact(std::string_view(rest).substr(0, len), v));
  }

  Expr identifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && std::isalpha(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    const std::string name(text_.substr(start, pos_ - start));
    const std::size_t digits_start = pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    const std::string digits(text_.substr(digits_start, pos_ - digits_start));

    if (!digits.empty()) {
      if (name != "x" && name != "u" && name != "w") {
        pos_ = start;
        fail("unknown identifier '" + name + digits + "'", ErrorKind::UnknownIdentifier);
      }
      const long one_based = std::strtol(digits.c_str(), nullptr, 10);
      const VarKind kind = name == "x" ? VarKind::State : name == "u" ? VarKind::Input : VarKind::Noise;
      const int limit = kind == VarKind::State ? dims_.n_state : kind == VarKind::Input ? dims_.n_input : dims_.n_noise;
      if (one_based < 1 || one_based > limit) {
        pos_ = start;
        fail("variable '" + name + digits + "' out of range (declared " + std::to_string(limit) + ")",
             ErrorKind::IndexOutOfRange);
      }
      return Expr::var(kind, static_cast<int>(one_based - 1));
    }

    static const std::pair<const char*, Op> kFunctions[] = {
        {"sin", Op::Sin}, {"cos", Op::Cos}, {"exp", Op::Exp}, {"tanh", Op::Tanh},
        {"abs", Op::Abs}, {"min", Op::Min}, {"max", Op::Max},
    };
    for (const auto& [fname, op] : kFunctions) {
      if (name != fname) continue;
      expect('(');
      Expr a = expr();
      if (is_binary(op)) {
        expect(',');
        Expr b = expr();
        expect(')');
        return Expr::binary(op, a, b);
      }
      expect(')');
      return Expr::unary(op, a);
    }
    pos_ = start;
    fail("unknown identifier '" + name + "'", ErrorKind::UnknownIdentifier);
  }

  std::string_view text_;
  Dims dims_;
  std::size_t pos_ = 0;
};

void unparse(const Expr& e, std::string& out) {
  switch (e.op()) {
    case Op::Const: {
      const std::string s = format_double(e.value());
      if (e.value() < 0.0 || std::signbit(e.value())) {
        out += "(" + s + ")";
      } else {
        out += s;
      }
      return;
    }
    case Op::StateVar: out += "x" + std::to_string(e.index() + 1); return;
    case Op::InputVar: out += "u" + std::to_string(e.index() + 1); return;
    case Op::NoiseVar: out += "w" + std::to_string(e.index() + 1); return;
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div: {
      const char sym = e.op() == Op::Add ? '+' : e.op() == Op::Sub ? '-' : e.op() == Op::Mul ? '*' : '/';
      out += "(";
      unparse(e.lhs(), out);
      out += " ";
      out += sym;
      out += " ";
      unparse(e.rhs(), out);
      out += ")";
      return;
    }
    case Op::Neg:
      // Operand is always parenthesized: "-2" would read back as a negative
      // literal and "-a^2" as (-a)^2.
      out += "(-(";
      unparse(e.lhs(), out);
      out += "))";
      return;
    case Op::PowInt:
      out += "(";
      unparse(e.lhs(), out);
      out += ")^" + std::to_string(e.exponent());
      return;
    default: {
      out += function_name(e.op());
      out += "(";
      unparse(e.lhs(), out);
      if (is_binary(e.op())) {
        out += ", ";
        unparse(e.rhs(), out);
      }
      out += ")";
      return;
    }
  }
}

}  // namespace

Expr::Expr() : Expr(constant(0.0, true)) {}

Expr Expr::constant(double value, bool exact) {
  auto n = std::make_shared<Node>();
  n->value = value;
  n->exact = exact;
  return Expr(std::shared_ptr<const Node>(std::move(n)));
}

Expr Expr::var(VarKind kind, int index) {
  if (index < 0) throw Error(ErrorKind::IndexOutOfRange, "negative variable index");
  return Expr(make_node(op_of(kind), 0.0, index, 0, {}));
}

Expr Expr::unary(Op op, Expr arg) {
  if (!is_unary(op)) throw Error(ErrorKind::PreconditionViolated, "not a unary operator");
  return Expr(make_node(op, 0.0, 0, 0, {std::move(arg)}));
}

Expr Expr::binary(Op op, Expr lhs, Expr rhs) {
  if (!is_binary(op)) throw Error(ErrorKind::PreconditionViolated, "not a binary operator");
  return Expr(make_node(op, 0.0, 0, 0, {std::move(lhs), std::move(rhs)}));
}

Expr Expr::pow(Expr base, int exponent) {
  if (exponent < 0) throw Error(ErrorKind::PreconditionViolated, "negative integer exponent");
  return Expr(make_node(Op::PowInt, 0.0, 0, exponent, {std::move(base)}));
}

Op Expr::op() const { return node_->op; }
double Expr::value() const { return node_->value; }
bool Expr::exact() const { return node_->exact; }
int Expr::index() const { return node_->index; }
int Expr::exponent() const { return node_->exponent; }
const Expr& Expr::lhs() const { return node_->args.at(0); }
const Expr& Expr::rhs() const { return node_->args.at(1); }

bool Expr::depends_on(VarKind kind, int index) const {
  if (is_var(op())) return kind_of(op()) == kind && this->index() == index;
  for (const Expr& a : node_->args) {
    if (a.depends_on(kind, index)) return true;
  }
  return false;
}

bool Expr::uses(VarKind kind) const { return required_dim(kind) > 0; }

int Expr::required_dim(VarKind kind) const {
  if (is_var(op())) return kind_of(op()) == kind ? index() + 1 : 0;
  int d = 0;
  for (const Expr& a : node_->args) d = std::max(d, a.required_dim(kind));
  return d;
}

bool operator==(const Expr& a, const Expr& b) {
  if (a.node_ == b.node_) return true;
  const auto& x = *a.node_;
  const auto& y = *b.node_;
  if (x.op != y.op || x.args.size() != y.args.size()) return false;
  switch (x.op) {
    case Op::Const:
      if (std::bit_cast<std::uint64_t>(x.value) != std::bit_cast<std::uint64_t>(y.value)) return false;
      break;
    case Op::StateVar:
    case Op::InputVar:
    case Op::NoiseVar:
      if (x.index != y.index) return false;
      break;
    case Op::PowInt:
      if (x.exponent != y.exponent) return false;
      break;
    default:
      break;
  }
  for (std::size_t i = 0; i < x.args.size(); ++i) {
    if (!(x.args[i] == y.args[i])) return false;
  }
  return true;
}

Expr operator+(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) {
    const double r = a.value() + b.value();
    return Expr::constant(r, a.exact() && b.exact() && sum_is_exact(a.value(), b.value(), r));
  }
  if (a.is_constant() && a.value() == 0.0) return b;
  if (b.is_constant() && b.value() == 0.0) return a;
  return Expr::binary(Op::Add, a, b);
}

Expr operator-(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) {
    const double r = a.value() - b.value();
    return Expr::constant(r, a.exact() && b.exact() && sum_is_exact(a.value(), -b.value(), r));
  }
  if (b.is_constant() && b.value() == 0.0) return a;
  if (a.is_constant() && a.value() == 0.0) return -b;
  return Expr::binary(Op::Sub, a, b);
}

Expr operator*(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) {
    const double r = a.value() * b.value();
    return Expr::constant(r, a.exact() && b.exact() && product_is_exact(a.value(), b.value(), r));
  }
  if ((a.is_constant() && a.value() == 0.0) || (b.is_constant() && b.value() == 0.0)) return Expr::constant(0.0, true);
  if (a.is_constant() && a.value() == 1.0) return b;
  if (b.is_constant() && b.value() == 1.0) return a;
  return Expr::binary(Op::Mul, a, b);
}

Expr operator/(const Expr& a, const Expr& b) {
  if (a.is_constant() && a.value() == 0.0) return Expr::constant(0.0, true);
  if (b.is_constant() && b.value() == 1.0) return a;
  return Expr::binary(Op::Div, a, b);
}

Expr operator-(const Expr& a) {
  if (a.is_constant()) return Expr::constant(-a.value(), a.exact());
  return Expr::unary(Op::Neg, a);
}

Expr parse_expr(std::string_view text, const Dims& dims) {
  if (dims.n_state < 0 || dims.n_input < 0 || dims.n_noise < 0) {
    throw Error(ErrorKind::PreconditionViolated, "negative dimension");
  }
  return Parser(text, dims).parse();
}

std::string to_string(const Expr& e) {
  std::string out;
  unparse(e, out);
  return out;
}

void validate(const Expr& e, const Dims& dims) {
  const auto check = [&](VarKind kind, int limit, const char* name) {
    const int need = e.required_dim(kind);
    if (need > limit) {
      throw Error(ErrorKind::IndexOutOfRange, std::string("variable ") + name + std::to_string(need) +
                                                  " out of range (declared " + std::to_string(limit) + ")");
    }
  };
  check(VarKind::State, dims.n_state, "x");
  check(VarKind::Input, dims.n_input, "u");
  check(VarKind::Noise, dims.n_noise, "w");
}

namespace detail {

double divide(double num, double den) {
  if (std::fabs(den) < 1e-300) throw Error(ErrorKind::DivisionNearZero, "denominator magnitude below 1e-300");
  return num / den;
}

Interval divide(const Interval& num, const Interval& den) { return num / den; }

void require_finite(double v) {
  if (!std::isfinite(v)) throw Error(ErrorKind::NonFiniteResult, "expression evaluated to a non-finite value");
}

void require_finite(const Interval& v) {
  if (!std::isfinite(v.lo()) || !std::isfinite(v.hi())) {
    throw Error(ErrorKind::NonFiniteBound, "expression enclosure is not finite");
  }
}

}  // namespace detail

double eval(const Expr& e, const Vector& x, const Vector& u, const Vector& w) { return evaluate<double>(e, x, u, w); }

Interval interval_eval(const Expr& e, const Box& bx, const Box& bu, const Box& bw) {
  return evaluate<Interval>(e, bx, bu, bw);
}

Expr differentiate(const Expr& e, VarKind kind, int index) {
  if (!e.depends_on(kind, index)) return Expr::constant(0.0, true);
  const auto d = [&](const Expr& s) { return differentiate(s, kind, index); };
  switch (e.op()) {
    case Op::StateVar:
    case Op::InputVar:
    case Op::NoiseVar:
      return Expr::constant(1.0);
    case Op::Add: return d(e.lhs()) + d(e.rhs());
    case Op::Sub: return d(e.lhs()) - d(e.rhs());
    case Op::Mul: return d(e.lhs()) * e.rhs() + e.lhs() * d(e.rhs());
    case Op::Div:
      return (d(e.lhs()) * e.rhs() - e.lhs() * d(e.rhs())) / Expr::pow(e.rhs(), 2);
    case Op::Neg: return -d(e.lhs());
    case Op::PowInt: {
      const int p = e.exponent();
      if (p == 0) return Expr::constant(0.0);
      const Expr inner = p == 2 ? e.lhs() : Expr::pow(e.lhs(), p - 1);
      return Expr::constant(static_cast<double>(p)) * inner * d(e.lhs());
    }
    case Op::Exp: return e * d(e.lhs());
    case Op::Sin: return Expr::unary(Op::Cos, e.lhs()) * d(e.lhs());
    case Op::Cos: return -Expr::unary(Op::Sin, e.lhs()) * d(e.lhs());
    case Op::Tanh: return (Expr::constant(1.0) - Expr::pow(e, 2)) * d(e.lhs());
    case Op::Abs:
    case Op::Min:
    case Op::Max:
      throw Error(ErrorKind::NonDifferentiableNode,
                  std::string(function_name(e.op())) + " is not differentiable: " + to_string(e));
    case Op::Const:
      break;
  }
  return Expr::constant(0.0);
}

}  // namespace certsynth

namespace certsynth {

std::string exact_decimal(double v) {
  if (!std::isfinite(v) || v < 0.0) throw Error(ErrorKind::PreconditionViolated, "exact_decimal needs a finite v >= 0");
  if (v == 0.0) return "0.0";
  int e = 0;
  const double f = std::frexp(v, &e);
  auto m = static_cast<std::uint64_t>(std::ldexp(f, 53));
  int exp2 = e - 53;
  while ((m & 1U) == 0 && exp2 < 0) {
    m >>= 1;
    ++exp2;
  }
  Digits d(m);
  if (exp2 >= 0) {
    for (int i = 0; i < exp2; ++i) d.multiply(2);
    return d.str() + ".0";
  }
  // m / 2^k = m * 5^k / 10^k
  const int k = -exp2;
  for (int i = 0; i < k; ++i) d.multiply(5);
  std::string s = d.str();
  if (static_cast<int>(s.size()) <= k) s.insert(0, static_cast<std::size_t>(k + 1) - s.size(), '0');
  return s.substr(0, s.size() - static_cast<std::size_t>(k)) + "." + s.substr(s.size() - static_cast<std::size_t>(k));
}

}  // namespace certsynth
