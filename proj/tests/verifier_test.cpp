#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "certsynth/verifier.hpp"
#include "problems.hpp"
#include "smtlib_checker.hpp"

namespace certsynth {
namespace {

using testing::vec;

Region interval_region(double lo, double hi) { return Region{ConstrainedSet{make_box(vec({lo}), vec({hi})), {}}, {}}; }

Region square_region(double lo, double hi) {
  return Region{ConstrainedSet{make_box(vec({lo, lo}), vec({hi, hi})), {}}, {}};
}

VerificationCondition cond(const std::string& text, Region region) {
  const Dims dims{static_cast<int>(region.set.dim()), 0, 0};
  return expression_condition("c", std::move(region), parse_expr(text, dims));
}

TEST(Verify, CertifiesNegativeQuadratic) {
  const Verdict v = verify_vc(cond("x1*x1 - 1", interval_region(-0.5, 0.5)), {});
  EXPECT_EQ(v.kind, VerdictKind::Certified);
  EXPECT_GT(v.boxes, 0);
}

TEST(Verify, FalsifiesWithWitness) {
  const auto vc = cond("x1*x1 - 1", interval_region(0, 2));
  const Verdict v = verify_vc(vc, {});
  ASSERT_EQ(v.kind, VerdictKind::Falsified);
  ASSERT_EQ(v.cex.size(), 1);
  EXPECT_GE(v.cex[0], 0.0);
  EXPECT_LE(v.cex[0], 2.0);
  EXPECT_GE(v.cex[0] * v.cex[0] - 1.0, 0.0);
  EXPECT_EQ(v.violation, vc_violation(vc, v.cex));
}

TEST(Verify, ZeroIsNotNegative) {
  const Verdict v = verify_vc(cond("0", interval_region(0, 1)), {});
  EXPECT_EQ(v.kind, VerdictKind::Falsified);
  EXPECT_EQ(v.boxes, 1);
}

TEST(Verify, UnknownWhenSupremumIsApproachedButNotAttained) {
  // sup is 0 at x = 1/3, which no dyadic candidate hits exactly.
  const Verdict v = verify_vc(cond("-(x1 - 1/3)*(x1 - 1/3)", interval_region(0, 1)), {});
  ASSERT_EQ(v.kind, VerdictKind::Unknown);
  EXPECT_GT(v.undecided, 0);
  EXPECT_LT(v.smallest_width, 1e-3);
  ASSERT_FALSE(v.undecided_points.empty());
  EXPECT_LE(static_cast<int>(v.undecided_points.size()), 64);
  for (const auto& p : v.undecided_points) EXPECT_NEAR(p[0], 1.0 / 3.0, 1e-2);
  EXPECT_TRUE(std::is_sorted(v.undecided_points.begin(), v.undecided_points.end(),
                             [](const Vector& a, const Vector& b) { return a[0] < b[0]; }));
}

TEST(Verify, BoxBudget) {
  VerifierConfig cfg;
  cfg.max_boxes = 5;
  const Verdict v = verify_vc(cond("-(x1 - 1/3)*(x1 - 1/3)", interval_region(0, 1)), cfg);
  EXPECT_EQ(v.kind, VerdictKind::ResourceExhausted);
  EXPECT_EQ(v.boxes, 5);
}

TEST(Verify, RejectsBadConfig) {
  const auto vc = cond("x1 - 2", interval_region(0, 1));
  for (auto edit : {+[](VerifierConfig& c) { c.w_min = 0; }, +[](VerifierConfig& c) { c.max_boxes = 0; },
                    +[](VerifierConfig& c) { c.samples_per_box = 0; }}) {
    VerifierConfig cfg;
    edit(cfg);
    try {
      verify_vc(vc, cfg);
      ADD_FAILURE() << "accepted";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::PreconditionViolated);
    }
  }
}

TEST(Verify, ExcludedSetIsSkipped) {
  // x in [0, 2] \ [0, 1]: the condition only has to hold on (1, 2].
  Region r = interval_region(0, 2);
  r.excluded.push_back(ConstrainedSet{make_box(vec({0}), vec({1})), {}});
  EXPECT_EQ(verify_vc(cond("0.5 - x1", r), {}).kind, VerdictKind::Certified);
  EXPECT_EQ(verify_vc(cond("0.5 - x1", interval_region(0, 2)), {}).kind, VerdictKind::Falsified);
}

TEST(Verify, ConstrainedRegion) {
  // Unit disc: x1 + x2 < 1.5 holds (max sqrt 2), x1 + x2 < 1.3 does not.
  Region disc{ball(vec({0, 0}), 1.0), {}};
  EXPECT_EQ(verify_vc(cond("x1 + x2 - 1.5", disc), {}).kind, VerdictKind::Certified);
  const Verdict v = verify_vc(cond("x1 + x2 - 1.3", disc), {});
  ASSERT_EQ(v.kind, VerdictKind::Falsified);
  EXPECT_LE(v.cex.squaredNorm(), 1.0);
}

TEST(Falsify, Contract) {
  Rng rng(3);
  const auto bad = cond("x1 - 0.5", interval_region(0, 1));
  const auto cex = falsify_random(bad, 100, rng);
  ASSERT_TRUE(cex.has_value());
  EXPECT_EQ(cex->vc_id, "c");
  EXPECT_GE(cex->point[0], 0.5);
  EXPECT_GE(cex->violation, 0.0);

  const auto good = cond("x1 - 1.1", interval_region(0, 1));
  EXPECT_FALSE(falsify_random(good, 1000, rng).has_value());
  EXPECT_THROW(falsify_random(good, 0, rng), Error);
}

TEST(Falsify, Deterministic) {
  const auto vc = cond("sin(7*x1) - 0.9", interval_region(-2, 2));
  Rng a(11), b(11);
  const auto ca = falsify_random(vc, 500, a);
  const auto cb = falsify_random(vc, 500, b);
  ASSERT_TRUE(ca && cb);
  EXPECT_EQ(ca->point, cb->point);
}

TEST(VerifyAll, Examples) {
  std::vector<VerificationCondition> vcs{cond("x1 - 2", interval_region(0, 1)),
                                         cond("x1*x1 - 0.5", interval_region(-0.5, 0.5))};
  vcs[1].id = "d";
  const auto out = verify_all(vcs, {});
  ASSERT_EQ(out.size(), 2U);
  EXPECT_EQ(out[0].first, "c");
  EXPECT_EQ(out[1].first, "d");
  EXPECT_TRUE(all_certified(out));

  vcs[0] = cond("x1 - 0.5", interval_region(0, 1));
  const auto mixed = verify_all(vcs, {});
  EXPECT_EQ(mixed[0].second.kind, VerdictKind::Falsified);
  EXPECT_EQ(mixed[1].second.kind, VerdictKind::Certified);
  EXPECT_FALSE(all_certified(mixed));

  try {
    verify_all({}, {});
    ADD_FAILURE() << "empty list accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MalformedProblem);
  }
}

// Random smooth conditions on [-1, 1]^2 with a comfortable gap from zero.
std::string random_condition(Rng& rng, double& offset) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.6f*x1*x1 + %.6f*x1*x2 + %.6f*sin(3*x2) + %.6f*tanh(x1)", a, b, c, d);
  offset = std::uniform_real_distribution<double>(-0.5, 2.5)(rng);
  return std::string(buf) + " - " + std::to_string(offset);
}

double grid_max(const VerificationCondition& vc, int n) {
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) {
      const Vector x = vec({-1.0 + 2.0 * i / n, -1.0 + 2.0 * j / n});
      best = std::max(best, vc_violation(vc, x));
    }
  }
  return best;
}

TEST(Property, AgreesWithGridOracle) {
  Rng rng(2024);
  int decided = 0;
  for (int trial = 0; trial < 40; ++trial) {
    double offset = 0;
    const auto vc = cond(random_condition(rng, offset), square_region(-1, 1));
    const double sup = grid_max(vc, 200);
    VerifierConfig cfg;
    cfg.w_min = 1e-4;
    const Verdict v = verify_vc(vc, cfg);
    if (sup >= 0.0) {
      EXPECT_NE(v.kind, VerdictKind::Certified) << trial;
    }
    // Gradients are below 10, so the grid misses at most 0.1 of the supremum.
    if (sup < -0.1) {
      EXPECT_EQ(v.kind, VerdictKind::Certified) << trial << " sup " << sup;
      ++decided;
    }
    if (sup > 0.01) {
      EXPECT_EQ(v.kind, VerdictKind::Falsified) << trial << " sup " << sup;
      ++decided;
    }
  }
  EXPECT_GT(decided, 20);
}

TEST(Property, CertifiedHoldsOnSamples) {
  Rng rng(77);
  int certified = 0;
  for (int trial = 0; trial < 30; ++trial) {
    double offset = 0;
    const auto vc = cond(random_condition(rng, offset), square_region(-1, 1));
    if (verify_vc(vc, {}).kind != VerdictKind::Certified) continue;
    ++certified;
    for (const auto& x : sample_region(vc.region, 20000, rng)) ASSERT_LT(vc_violation(vc, x), 0.0);
  }
  EXPECT_GT(certified, 5);
}

TEST(Property, ParallelMatchesSequential) {
  Rng rng(5);
  for (int trial = 0; trial < 15; ++trial) {
    double offset = 0;
    const auto vc = cond(random_condition(rng, offset), square_region(-1, 1));
    VerifierConfig seq;
    VerifierConfig par = seq;
    par.workers = 4;
    const Verdict a = verify_vc(vc, seq);
    const Verdict b = verify_vc(vc, par);
    // A falsifying parallel run may stop at a different witness; any other
    // verdict explores the same tree.
    EXPECT_EQ(a.kind, b.kind) << trial;
    if (a.kind != VerdictKind::Falsified) {
      EXPECT_EQ(a.boxes, b.boxes);
      EXPECT_EQ(a.undecided_points, b.undecided_points);
    } else {
      EXPECT_TRUE(is_violating(vc, vc_violation(vc, b.cex)));
    }
  }
}

TEST(Property, SmallerResolutionNeverLosesACertificate) {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    double offset = 0;
    const auto vc = cond(random_condition(rng, offset), square_region(-1, 1));
    VerifierConfig coarse;
    coarse.w_min = 1e-2;
    VerifierConfig fine = coarse;
    fine.w_min = 1e-4;
    const Verdict a = verify_vc(vc, coarse);
    const Verdict b = verify_vc(vc, fine);
    if (a.kind == VerdictKind::Certified) EXPECT_EQ(b.kind, VerdictKind::Certified);
    if (b.kind == VerdictKind::Falsified) EXPECT_NE(a.kind, VerdictKind::Certified);
  }
}

TEST(Rules, RankingCertificateVerifies) {
  const Problem p = validate_problem(testing::ranking());
  const auto vcs = compile_rules(p, testing::affine_net(vec({1}), 0), nullptr);
  for (const auto& [id, v] : verify_all(vcs, {})) EXPECT_EQ(v.kind, VerdictKind::Certified) << id;
}

TEST(Rules, LyapunovSquaresVerify) {
  const Problem p = validate_problem(testing::stability_2d());
  const auto vcs = compile_rules(p, testing::squares(vec({0, 0})), nullptr);
  for (const auto& [id, v] : verify_all(vcs, {})) EXPECT_EQ(v.kind, VerdictKind::Certified) << id;
}

TEST(Rules, WrongSignIsFalsified) {
  const Problem p = validate_problem(testing::ranking());
  const auto vcs = compile_rules(p, testing::affine_net(vec({-1}), 0), nullptr);
  EXPECT_FALSE(all_certified(verify_all(vcs, {})));
}

TEST(Smt, ExactDecimals) {
  EXPECT_EQ(smt_real(0.0), "0.0");
  EXPECT_EQ(smt_real(1.0), "1.0");
  EXPECT_EQ(smt_real(0.5), "0.5");
  EXPECT_EQ(smt_real(-0.25), "(- 0.25)");
  EXPECT_EQ(smt_real(1e20), "100000000000000000000.0");
  EXPECT_EQ(smt_real(0.1), "0.1000000000000000055511151231257827021181583404541015625");
  EXPECT_EQ(smt_real(std::ldexp(1.0, -10)), "0.0009765625");
  EXPECT_THROW(smt_real(std::numeric_limits<double>::infinity()), Error);
}

TEST(Smt, ParseMode) {
  EXPECT_EQ(parse_smt_mode("polynomial"), SmtMode::Polynomial);
  EXPECT_EQ(parse_smt_mode("dreal"), SmtMode::DReal);
  EXPECT_THROW(parse_smt_mode("z4"), Error);
}

TEST(Smt, QuadraticQuery) {
  const std::string text = export_smtlib(cond("x1*x1 - 1", interval_region(0, 2)), SmtMode::Polynomial);
  EXPECT_EQ(testing::SmtChecker::check(text), "") << text;
  EXPECT_NE(text.find("(set-logic QF_NRA)"), std::string::npos);
  EXPECT_NE(text.find("(declare-const x1 Real)"), std::string::npos);
  EXPECT_NE(text.find("(check-sat)"), std::string::npos);
  EXPECT_NE(text.find("(>= (- (* x1 x1) 1.0) 0.0)"), std::string::npos) << text;
  EXPECT_NE(text.find("2.0"), std::string::npos);
}

TEST(Smt, TanhNeedsDreal) {
  const Problem p = validate_problem(testing::contraction_safety());
  const Network net = init_network(p.certificate_shape, 1);
  const auto vcs = compile_rules(p, net, nullptr);
  try {
    export_smtlib(vcs.front(), SmtMode::Polynomial);
    ADD_FAILURE() << "tanh exported as polynomial";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnsupportedNode);
  }
  for (const auto& vc : vcs) {
    const std::string text = export_smtlib(vc, SmtMode::DReal);
    EXPECT_EQ(testing::SmtChecker::check(text), "") << vc.id;
    EXPECT_NE(text.find("tanh"), std::string::npos);
  }
}

std::vector<VerificationCondition> fixture_conditions(bool polynomial_only) {
  std::vector<VerificationCondition> all;
  const auto add = [&](const ProblemDescription& d, std::uint64_t seed) {
    const Problem p = validate_problem(d);
    const Network cert = init_network(p.certificate_shape, seed);
    std::optional<Network> ctrl;
    if (p.controller_shape) ctrl = init_network(*p.controller_shape, seed + 1);
    for (auto& vc : compile_rules(p, cert, ctrl ? &*ctrl : nullptr)) all.push_back(std::move(vc));
  };
  add(testing::stability_1d(), 1);
  add(testing::stability_2d(), 2);
  add(testing::ranking(), 3);
  add(testing::walk(), 4);
  if (!polynomial_only) {
    add(testing::barrier(), 5);
    add(testing::contraction_safety(), 6);
    add(testing::reach_avoid(), 7);
    add(testing::controlled_stability(), 8);
    add(testing::controlled_reach(), 9);
  }
  return all;
}

TEST(Smt, EveryFixtureIsWellFormed) {
  for (const auto& vc : fixture_conditions(true)) {
    const std::string text = export_smtlib(vc, SmtMode::Polynomial);
    EXPECT_EQ(testing::SmtChecker::check(text), "") << vc.id << "\n" << text;
  }
  for (const auto& vc : fixture_conditions(false)) {
    std::string text;
    try {
      text = export_smtlib(vc, SmtMode::DReal);
    } catch (const Error& e) {
      ADD_FAILURE() << vc.id << ": " << e.what();
      continue;
    }
    EXPECT_EQ(testing::SmtChecker::check(text), "") << vc.id << "\n" << text;
  }
}

TEST(Smt, CheckerRejectsBrokenScripts) {
  EXPECT_NE(testing::SmtChecker::check("(set-logic QF_NRA)(assert (> y 0.0))"), "");
  EXPECT_NE(testing::SmtChecker::check("(set-logic QF_NRA)(declare-const x Real)(assert (+ x 1.0))"), "");
  EXPECT_NE(testing::SmtChecker::check("(set-logic QF_NRA)(declare-const x Real)(assert (> x 0.0)"), "");
  EXPECT_NE(testing::SmtChecker::check("(set-logic QF_NRA)(declare-const x Real)(assert (let () x))"), "");
  EXPECT_EQ(testing::SmtChecker::check("(set-logic QF_NRA)(declare-const x Real)"
                                       "(assert (let ((a (* x x))) (> a 1.0)))(check-sat)"),
            "");
}

TEST(Smt, ExternalSolverAgrees) {
  const auto solver = testing::find_solver();
  if (!solver) GTEST_SKIP() << "no z3 or cvc5 on PATH";
  const auto run = [&](const VerificationCondition& vc) {
    return testing::run_solver(*solver, export_smtlib(vc, SmtMode::Polynomial));
  };
  EXPECT_EQ(run(cond("x1*x1 - 1", interval_region(-0.5, 0.5))), "unsat");
  EXPECT_EQ(run(cond("x1*x1 - 1", interval_region(0, 2))), "sat");
  const Problem p = validate_problem(testing::ranking());
  for (const auto& vc : compile_rules(p, testing::affine_net(vec({1}), 0), nullptr)) EXPECT_EQ(run(vc), "unsat") << vc.id;
}

}  // namespace
}  // namespace certsynth
