#include <cmath>
#include <cstdint>
#include <sstream>

#include "certsynth/verifier.hpp"

namespace certsynth {

SmtMode parse_smt_mode(const std::string& name) {
  if (name == "polynomial") return SmtMode::Polynomial;
  if (name == "dreal") return SmtMode::DReal;
  throw Error(ErrorKind::PreconditionViolated, "unknown SMT mode '" + name + "' (expected polynomial or dreal)");
}


std::string smt_real(double v) {
  if (!std::isfinite(v)) throw Error(ErrorKind::NonFiniteResult, "non-finite constant in SMT export");
  const std::string text = exact_decimal(std::fabs(v));
  return v < 0 ? "(- " + text + ")" : text;
}

namespace {

std::string unsupported(const std::string& what) {
  throw Error(ErrorKind::UnsupportedNode, what + " is not expressible in polynomial mode");
}

class Emitter {
 public:
  Emitter(const VerificationCondition& vc, SmtMode mode) : vc_(vc), mode_(mode), loop_(vc.violation.loop()) {}

  std::string run() {
    const int n = vc_.region.set.dim();
    for (int i = 0; i < n; ++i) xs_.push_back("x" + std::to_string(i + 1));

    // Build every term first so unsupported nodes are reported before any output.
    std::vector<std::string> asserts;
    asserts.push_back(membership(vc_.region.set, xs_));
    for (const auto& e : vc_.region.excluded) asserts.push_back("(not " + membership(e, xs_) + ")");
    for (const auto& g : vc_.gates) asserts.push_back("(<= " + composite(g) + " 0.0)");
    asserts.push_back(negated_condition());

    std::ostringstream os;
    os << "; negation of " << vc_.id << ": sat gives a counterexample, unsat proves the condition\n";
    os << "(set-option :produce-models true)\n";
    os << "(set-logic QF_NRA)\n";
    for (const auto& x : xs_) os << "(declare-const " << x << " Real)\n";
    for (const auto& a : asserts) os << "(assert " << a << ")\n";
    os << "(check-sat)\n(get-model)\n(exit)\n";
    return os.str();
  }

 private:
  static std::string apply(const std::string& op, const std::vector<std::string>& args) {
    std::string s = "(" + op;
    for (const auto& a : args) s += " " + a;
    return s + ")";
  }

  std::string conj(const std::vector<std::string>& parts) const {
    if (parts.empty()) return "true";
    if (parts.size() == 1) return parts.front();
    return apply("and", parts);
  }

  std::string membership(const ConstrainedSet& s, const std::vector<std::string>& y) {
    std::vector<std::string> parts;
    for (int i = 0; i < s.dim(); ++i) {
      parts.push_back(apply("<=", {smt_real(s.base[i].lo()), y[static_cast<std::size_t>(i)]}));
      parts.push_back(apply("<=", {y[static_cast<std::size_t>(i)], smt_real(s.base[i].hi())}));
    }
    for (const auto& g : s.constraints) parts.push_back(apply("<=", {expr(g, y, {}, {}), "0.0"}));
    return conj(parts);
  }

  std::string negated_condition() {
    const auto& terms = vc_.violation.terms();
    if (terms.size() == 1 && terms.front().kind == TermKind::Exit && terms.front().weight == 1.0) {
      // Successor outside every set: violation > 0.
      const std::vector<std::string> y = successor(-1);
      std::vector<std::string> in;
      for (const auto& s : terms.front().sets) in.push_back(membership(s, y));
      return "(not " + (in.size() == 1 ? in.front() : apply("or", in)) + ")";
    }
    return apply(vc_.strict ? ">=" : ">", {composite(vc_.violation), "0.0"});
  }

  std::string composite(const CompositeFn& fn) {
    std::vector<std::string> parts;
    for (const auto& t : fn.terms()) {
      std::string term;
      switch (t.kind) {
        case TermKind::Constant: parts.push_back(smt_real(t.weight)); continue;
        case TermKind::Value: term = network(*vc_.cert, xs_, "v").front(); break;
        case TermKind::ValueAt: {
          std::vector<std::string> p;
          for (double c : t.point) p.push_back(smt_real(c));
          term = network(*vc_.cert, p, "v").front();
          break;
        }
        case TermKind::Next: term = network(*vc_.cert, successor(t.noise), "v").front(); break;
        case TermKind::Lie: term = lie(); break;
        case TermKind::State: term = expr(*t.expr, xs_, {}, {}); break;
        case TermKind::Exit:
          throw Error(ErrorKind::UnsupportedNode, "set-exit term inside a weighted sum");
      }
      parts.push_back(t.weight == 1.0 ? term : apply("*", {smt_real(t.weight), term}));
    }
    if (parts.size() == 1) return parts.front();
    return apply("+", parts);
  }

  std::vector<std::string> controls() {
    if (!vc_.ctrl) return {};
    return network(*vc_.ctrl, xs_, "g");
  }

  std::vector<std::string> successor(int noise) {
    const std::vector<std::string> us = controls();
    std::vector<std::string> ws;
    if (noise >= 0) {
      for (double w : loop_.system.noise[static_cast<std::size_t>(noise)].value) ws.push_back(smt_real(w));
    }
    std::vector<std::string> y;
    for (const auto& f : loop_.system.dynamics) y.push_back(expr(f, xs_, us, ws));
    return y;
  }

  std::string expr(const Expr& e, const std::vector<std::string>& x, const std::vector<std::string>& u,
                   const std::vector<std::string>& w) {
    const auto sub = [&](const Expr& a) { return expr(a, x, u, w); };
    switch (e.op()) {
      case Op::Const: return smt_real(e.value());
      case Op::StateVar: return x[static_cast<std::size_t>(e.index())];
      case Op::InputVar: return u[static_cast<std::size_t>(e.index())];
      case Op::NoiseVar: return w[static_cast<std::size_t>(e.index())];
      case Op::Add: return apply("+", {sub(e.lhs()), sub(e.rhs())});
      case Op::Sub: return apply("-", {sub(e.lhs()), sub(e.rhs())});
      case Op::Mul: return apply("*", {sub(e.lhs()), sub(e.rhs())});
      case Op::Div:
        if (mode_ == SmtMode::Polynomial && !e.rhs().is_constant()) return unsupported("division by a variable term");
        return apply("/", {sub(e.lhs()), sub(e.rhs())});
      case Op::Neg: return apply("-", {sub(e.lhs())});
      case Op::PowInt: {
        if (e.exponent() == 0) return "1.0";
        const std::string b = sub(e.lhs());
        if (e.exponent() == 1) return b;
        return apply("*", std::vector<std::string>(static_cast<std::size_t>(e.exponent()), b));
      }
      case Op::Exp:
      case Op::Sin:
      case Op::Cos:
      case Op::Tanh: {
        static const char* names[] = {"exp", "sin", "cos", "tanh"};
        const char* name = names[static_cast<int>(e.op()) - static_cast<int>(Op::Exp)];
        if (mode_ == SmtMode::Polynomial) return unsupported(name);
        return apply(name, {sub(e.lhs())});
      }
      case Op::Abs:
        if (mode_ == SmtMode::Polynomial) return unsupported("abs");
        {
          const std::string a = sub(e.lhs());
          return "(ite (>= " + a + " 0.0) " + a + " (- " + a + "))";
        }
      case Op::Min:
      case Op::Max: {
        if (mode_ == SmtMode::Polynomial) return unsupported(e.op() == Op::Min ? "min" : "max");
        const std::string a = sub(e.lhs()), b = sub(e.rhs());
        return "(ite (" + std::string(e.op() == Op::Min ? "<=" : ">=") + " " + a + " " + b + ") " + a + " " + b + ")";
      }
    }
    return unsupported("expression node");
  }

  std::string activation(Activation act, const std::string& z) {
    switch (act) {
      case Activation::Identity: return z;
      case Activation::Square: return apply("*", {z, z});
      case Activation::Tanh:
        if (mode_ == SmtMode::Polynomial) return unsupported("tanh activation");
        return apply("tanh", {z});
      case Activation::Relu:
        if (mode_ == SmtMode::Polynomial) return unsupported("relu activation");
        return "(ite (> " + z + " 0.0) " + z + " 0.0)";
    }
    return z;
  }

  std::string affine(const Layer& layer, Eigen::Index row, const std::vector<std::string>& in) {
    std::vector<std::string> parts;
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
      parts.push_back(apply("*", {smt_real(layer.weight(row, c)), in[static_cast<std::size_t>(c)]}));
    }
    parts.push_back(smt_real(layer.bias[row]));
    return apply("+", parts);
  }

  static std::string name(const std::string& prefix, std::size_t l, Eigen::Index i, const char* kind) {
    return prefix + std::to_string(l + 1) + kind + std::to_string(i + 1);
  }

  // Closed let-terms for every network output, one layer binding per let.
  std::vector<std::string> network(const Network& net, const std::vector<std::string>& in, const std::string& base) {
    const std::string prefix = base + std::to_string(++calls_) + "_";
    const auto& layers = net.layers();
    std::vector<std::string> binds;  // opened lets, closed at the end
    std::vector<std::string> cur = in;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const bool last = l + 1 == layers.size();
      std::vector<std::string> pre, post;
      std::string b1 = "(let (";
      for (Eigen::Index i = 0; i < layers[l].weight.rows(); ++i) {
        const std::string z = name(prefix, l, i, "z");
        b1 += "(" + z + " " + affine(layers[l], i, cur) + ")";
        pre.push_back(z);
      }
      binds.push_back(b1 + ") ");
      if (last) {
        cur = pre;
        break;
      }
      std::string b2 = "(let (";
      for (Eigen::Index i = 0; i < layers[l].weight.rows(); ++i) {
        const std::string a = name(prefix, l, i, "a");
        b2 += "(" + a + " " + activation(net.activation(l), pre[static_cast<std::size_t>(i)]) + ")";
        post.push_back(a);
      }
      binds.push_back(b2 + ") ");
      cur = post;
    }
    std::vector<std::string> outputs;
    for (std::size_t j = 0; j < cur.size(); ++j) {
      std::string out = cur[j];
      if (const auto& clamp = net.shape().clamp) {
        if (mode_ == SmtMode::Polynomial) unsupported("controller output clamp (tanh)");
        const Interval& t = (*clamp)[static_cast<Eigen::Index>(j)];
        out = apply("+", {smt_real(t.mid()), apply("*", {smt_real(0.5 * t.width()), apply("tanh", {out})})});
      }
      std::string term;
      for (const auto& b : binds) term += b;
      term += out + std::string(binds.size(), ')');
      outputs.push_back(term);
    }
    return outputs;
  }

  // grad V(x) . f(x, g(x)) by forward tangent propagation.
  std::string lie() {
    const Network& net = *vc_.cert;
    const std::vector<std::string> f = successor(-1);
    const std::string prefix = "v" + std::to_string(++calls_) + "_";
    const auto& layers = net.layers();
    std::string term;
    int open = 0;
    std::vector<std::string> cur = xs_, tan = f;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const bool last = l + 1 == layers.size();
      std::vector<std::string> pre, dpre;
      term += "(let (";
      for (Eigen::Index i = 0; i < layers[l].weight.rows(); ++i) {
        const std::string z = name(prefix, l, i, "z");
        const std::string dz = name(prefix, l, i, "dz");
        std::vector<std::string> parts;
        for (Eigen::Index c = 0; c < layers[l].weight.cols(); ++c) {
          parts.push_back(apply("*", {smt_real(layers[l].weight(i, c)), tan[static_cast<std::size_t>(c)]}));
        }
        term += "(" + z + " " + affine(layers[l], i, cur) + ")";
        term += "(" + dz + " " + (parts.size() == 1 ? parts.front() : apply("+", parts)) + ")";
        pre.push_back(z);
        dpre.push_back(dz);
      }
      term += ") ";
      ++open;
      if (last) {
        tan = dpre;
        break;
      }
      std::vector<std::string> post, dpost;
      term += "(let (";
      for (Eigen::Index i = 0; i < layers[l].weight.rows(); ++i) {
        const std::string a = name(prefix, l, i, "a");
        const std::string da = name(prefix, l, i, "da");
        const std::string& z = pre[static_cast<std::size_t>(i)];
        const std::string& dz = dpre[static_cast<std::size_t>(i)];
        std::string slope;
        switch (net.activation(l)) {
          case Activation::Square: slope = apply("*", {"2.0", z}); break;
          case Activation::Tanh: slope = "(- 1.0 (* " + activation(Activation::Tanh, z) + " " + activation(Activation::Tanh, z) + "))"; break;
          case Activation::Identity: slope = "1.0"; break;
          case Activation::Relu: unsupported("relu derivative");
        }
        term += "(" + a + " " + activation(net.activation(l), z) + ")";
        term += "(" + da + " " + apply("*", {slope, dz}) + ")";
        post.push_back(a);
        dpost.push_back(da);
      }
      term += ") ";
      ++open;
      cur = post;
      tan = dpost;
    }
    return term + tan.front() + std::string(static_cast<std::size_t>(open), ')');
  }

  const VerificationCondition& vc_;
  SmtMode mode_;
  const ClosedLoop& loop_;
  std::vector<std::string> xs_;
  int calls_ = 0;
};

}  // namespace

std::string export_smtlib(const VerificationCondition& vc, SmtMode mode) { return Emitter(vc, mode).run(); }

}  // namespace certsynth
