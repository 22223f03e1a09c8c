#include <gtest/gtest.h>

#include <sstream>

#include "certsynth/learner.hpp"
#include "problems.hpp"

namespace certsynth {
namespace {

using testing::vec;

Region interval_region(double lo, double hi) { return Region{ConstrainedSet{make_box(vec({lo}), vec({hi})), {}}, {}}; }

VerificationCondition identity_condition() {
  VerificationCondition vc = expression_condition("c", interval_region(-1, 1), parse_expr("x1", Dims{1, 0, 0}));
  vc.train_margin = 0.0;
  return vc;
}

Nets dummy_nets() { return Nets{testing::affine_net(vec({0}), 0), std::nullopt}; }

TEST(Loss, HingeFormula) {
  const std::vector<VerificationCondition> vcs{identity_condition()};
  Dataset d{{ConditionSamples{"c", {vec({-0.2}), vec({0.1})}, {}, {}}}};
  EXPECT_NEAR(loss(vcs, dummy_nets(), d, {}).value, 0.005, 1e-15);
}

TEST(Loss, FlatWhenSatisfiedWithMargin) {
  const Problem p = validate_problem(testing::stability_1d());
  const auto vcs = compile_rules(p, testing::squares(vec({0})), nullptr);
  Rng rng(1);
  const Dataset d = make_dataset(vcs, 200, rng);
  TrainConfig cfg;
  cfg.margins = {{"stab/pos", 0.0}, {"stab/dec", 0.0}};
  // stab/dec at x: -2x^2 + mu_dec*... stays below 0 away from the ball, so
  // use margin 0 and a certificate scaled up to clear mu_pos.
  Nets nets{testing::squares(vec({0})), std::nullopt};
  const LossResult l = loss(vcs, nets, d, cfg);
  EXPECT_EQ(l.value, 0.0);
  EXPECT_TRUE(l.grad.isZero(0.0));
}

TEST(Loss, WeightedCounterexample) {
  const std::vector<VerificationCondition> vcs{identity_condition()};
  Dataset d{{ConditionSamples{"c", {}, {vec({0.3})}, {0}}}};
  TrainConfig cfg;
  cfg.power = 1;
  EXPECT_NEAR(loss(vcs, dummy_nets(), d, cfg).value, 3.0, 1e-12);
}

TEST(Loss, GatedPointsContributeNothing) {
  const Problem p = validate_problem(testing::reach_avoid());
  Rng rng(4);
  const Network cert = init_network(p.certificate_shape, 4);
  const auto vcs = compile_rules(p, cert, nullptr);
  const Dataset d = make_dataset(vcs, 300, rng);
  const Nets nets{cert, std::nullopt};
  const LossResult l = loss(vcs, nets, d, {});
  for (std::size_t c = 0; c < vcs.size(); ++c) {
    if (vcs[c].gates.empty()) continue;
    // Recompute by hand over the gate-active points only.
    double sum = 0.0;
    for (const auto& x : d.conditions[c].points) {
      if (!gates_hold(vcs[c], nets.view(), x)) continue;
      const double h = vcs[c].violation.value(nets.view(), x) + vcs[c].train_margin;
      if (h > 0.0) sum += h * h;
    }
    std::vector<VerificationCondition> one{vcs[c]};
    Dataset only{{d.conditions[c]}};
    EXPECT_NEAR(loss(one, nets, only, {}).value, sum / 300.0, 1e-12);
  }
  EXPECT_GE(l.value, 0.0);
}

TEST(Loss, RejectsMismatchedDataset) {
  const std::vector<VerificationCondition> vcs{identity_condition()};
  EXPECT_THROW(loss(vcs, dummy_nets(), Dataset{}, {}), Error);
}

struct Instance {
  ProblemDescription (*make)();
  bool controller;
};

double relative_error(const Vector& a, const Vector& b) {
  return (a - b).lpNorm<Eigen::Infinity>() / std::max(1.0, b.lpNorm<Eigen::Infinity>());
}

TEST(Property, LossGradientMatchesFiniteDifferences) {
  const std::vector<Instance> problems{{testing::stability_1d, false}, {testing::stability_2d, false},
                                       {testing::ranking, false},      {testing::walk, false},
                                       {testing::barrier, true},       {testing::contraction_safety, false},
                                       {testing::reach_avoid, false},  {testing::controlled_stability, true},
                                       {testing::controlled_reach, true}};
  Rng rng(99);
  int checked = 0;
  for (int round = 0; round < 3; ++round) {
    for (const auto& inst : problems) {
      const Problem p = validate_problem(inst.make());
      const std::uint64_t seed = rng();
      Nets nets{init_network(p.certificate_shape, seed), std::nullopt};
      if (p.controller_shape) nets.ctrl = init_network(*p.controller_shape, seed + 1);
      const auto vcs = compile_rules(p, nets.cert, nets.ctrl ? &*nets.ctrl : nullptr);
      Dataset d = make_dataset(vcs, 30, rng);
      // A few weighted points as well.
      for (std::size_t c = 0; c < vcs.size(); ++c) {
        for (const auto& x : sample_region(vcs[c].region, 3, rng)) {
          d.conditions[c].counterexamples.push_back(x);
          d.conditions[c].cex_iteration.push_back(0);
        }
      }
      TrainConfig cfg;
      const LossResult l = loss(vcs, nets, d, cfg);
      const Vector theta = nets.parameters();
      Vector fd(theta.size());
      for (Eigen::Index i = 0; i < theta.size(); ++i) {
        const double h = 1e-6 * std::max(1.0, std::fabs(theta[i]));
        Nets plus = nets, minus = nets;
        Vector tp = theta, tm = theta;
        tp[i] += h;
        tm[i] -= h;
        plus.set_parameters(tp);
        minus.set_parameters(tm);
        fd[i] = (loss(vcs, plus, d, cfg).value - loss(vcs, minus, d, cfg).value) / (2 * h);
      }
      EXPECT_LT(relative_error(l.grad, fd), 1e-4) << spec_name(p.spec) << " round " << round;
      ++checked;
    }
  }
  EXPECT_EQ(checked, 27);
}

TEST(Property, ZeroLossMeansMarginHolds) {
  const Problem p = validate_problem(testing::stability_1d());
  Nets nets{testing::squares(vec({0})), std::nullopt};
  const auto vcs = compile_rules(p, nets.cert, nullptr);
  Rng rng(8);
  const Dataset d = make_dataset(vcs, 200, rng);
  TrainConfig cfg;
  cfg.margins = {{"stab/pos", 1e-3}, {"stab/dec", 1e-3}};
  const TrainResult r = train(vcs, nets, d, cfg);
  ASSERT_EQ(r.loss, 0.0);
  for (std::size_t c = 0; c < vcs.size(); ++c) {
    for (const auto& x : d.conditions[c].points) {
      EXPECT_LE(vcs[c].violation.value(r.nets.view(), x), -cfg.margin(vcs[c]));
    }
  }
}

TEST(Property, CounterexamplesIncreaseLoss) {
  Rng rng(21);
  const Problem p = validate_problem(testing::stability_2d());
  for (int trial = 0; trial < 20; ++trial) {
    const Nets nets{init_network(p.certificate_shape, rng()), std::nullopt};
    const auto vcs = compile_rules(p, nets.cert, nullptr);
    Dataset d = make_dataset(vcs, 50, rng);
    VerifierConfig vcfg;
    vcfg.seed = static_cast<std::uint64_t>(trial);
    for (std::size_t c = 0; c < vcs.size(); ++c) {
      const auto cex = falsify_random(vcs[c], 500, rng);
      if (!cex) continue;
      const double before = loss(vcs, nets, d, {}).value;
      absorb_counterexamples(d, vcs, {*cex}, 4, 0.05, trial, rng);
      EXPECT_GT(loss(vcs, nets, d, {}).value, before);
    }
  }
}

TEST(Train, AlreadyZeroStopsAfterTenEpochs) {
  const std::vector<VerificationCondition> vcs{
      expression_condition("c", interval_region(-1, 1), parse_expr("x1 - 2", Dims{1, 0, 0}))};
  Rng rng(0);
  const Dataset d = make_dataset(vcs, 20, rng);
  const Nets nets{init_network(NetworkShape{1, {{3, Activation::Tanh}}, 1, std::nullopt}, 5), std::nullopt};
  const TrainResult r = train(vcs, nets, d, {});
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(r.trace.size(), 10U);
  EXPECT_EQ(r.nets.cert, nets.cert);
}

TEST(Train, StabilityFixtureReachesZero) {
  const Problem p = validate_problem(testing::stability_1d());
  const Nets nets{init_network(p.certificate_shape, 0), std::nullopt};
  const auto vcs = compile_rules(p, nets.cert, nullptr);
  Rng rng(0);
  const Dataset d = make_dataset(vcs, 500, rng);
  const TrainResult r = train(vcs, nets, d, {});
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_LE(r.trace.size(), 501U);
}

TEST(Train, Deterministic) {
  const Problem p = validate_problem(testing::controlled_stability());
  const Nets nets{init_network(p.certificate_shape, 3), init_network(*p.controller_shape, 4)};
  const auto vcs = compile_rules(p, nets.cert, &*nets.ctrl);
  Rng rng(3);
  const Dataset d = make_dataset(vcs, 100, rng);
  TrainConfig cfg;
  cfg.epochs = 50;
  const TrainResult a = train(vcs, nets, d, cfg);
  const TrainResult b = train(vcs, nets, d, cfg);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) EXPECT_EQ(a.trace[i].loss, b.trace[i].loss);
  EXPECT_EQ(a.nets.cert, b.nets.cert);
  EXPECT_EQ(*a.nets.ctrl, *b.nets.ctrl);
  EXPECT_LE(a.loss, a.trace.front().loss);
}

TEST(Train, ZeroEpochsReturnsInput) {
  const Problem p = validate_problem(testing::stability_1d());
  const Nets nets{init_network(p.certificate_shape, 1), std::nullopt};
  const auto vcs = compile_rules(p, nets.cert, nullptr);
  Rng rng(1);
  const Dataset d = make_dataset(vcs, 20, rng);
  TrainConfig cfg;
  cfg.epochs = 0;
  const TrainResult r = train(vcs, nets, d, cfg);
  EXPECT_EQ(r.trace.size(), 1U);
  EXPECT_EQ(r.nets.cert, nets.cert);
}

TEST(Train, ConfigValidation) {
  const std::vector<VerificationCondition> vcs{identity_condition()};
  Dataset d{{ConditionSamples{"c", {vec({0.0})}, {}, {}}}};
  const auto rejects = [&](TrainConfig cfg) {
    try {
      train(vcs, dummy_nets(), d, cfg);
    } catch (const Error& e) {
      return e.kind() == ErrorKind::PreconditionViolated;
    }
    return false;
  };
  TrainConfig c;
  c.step = 0;
  EXPECT_TRUE(rejects(c));
  c = {};
  c.power = 3;
  EXPECT_TRUE(rejects(c));
  c = {};
  c.kappa = 0.5;
  EXPECT_TRUE(rejects(c));
  c = {};
  c.epochs = -1;
  EXPECT_TRUE(rejects(c));
}

TEST(Absorb, GrowthBound) {
  const std::vector<VerificationCondition> vcs{identity_condition()};
  Dataset d{{ConditionSamples{"c", {}, {}, {}}}};
  Rng rng(2);
  absorb_counterexamples(d, vcs, {Counterexample{"c", vec({0.99}), 0.99}}, 4, 0.05, 1, rng);
  EXPECT_GE(d.conditions[0].counterexamples.size(), 1U);
  EXPECT_LE(d.conditions[0].counterexamples.size(), 5U);
  EXPECT_EQ(d.conditions[0].counterexamples.front(), vec({0.99}));
  for (const auto& x : d.conditions[0].counterexamples) EXPECT_TRUE(region_membership(vcs[0].region, x));
  EXPECT_EQ(d.conditions[0].cex_iteration, std::vector<int>(d.conditions[0].counterexamples.size(), 1));
}

TEST(Absorb, DuplicatesAcrossIterationsAreKept) {
  const std::vector<VerificationCondition> vcs{identity_condition()};
  Dataset d{{ConditionSamples{"c", {}, {}, {}}}};
  Rng rng(2);
  const Counterexample cex{"c", vec({0.5}), 0.5};
  absorb_counterexamples(d, vcs, {cex}, 0, 0.1, 1, rng);
  absorb_counterexamples(d, vcs, {cex}, 0, 0.1, 2, rng);
  EXPECT_EQ(d.conditions[0].counterexamples.size(), 2U);
  EXPECT_EQ(d.conditions[0].cex_iteration, (std::vector<int>{1, 2}));
}

TEST(Absorb, ZeroRadiusAddsTheCounterexampleOnly) {
  const std::vector<VerificationCondition> vcs{identity_condition()};
  Dataset d{{ConditionSamples{"c", {}, {}, {}}}};
  Rng rng(2);
  absorb_counterexamples(d, vcs, {Counterexample{"c", vec({0.5}), 0.5}}, 4, 0.0, 0, rng);
  EXPECT_EQ(d.conditions[0].counterexamples.size(), 1U);
  EXPECT_THROW(absorb_counterexamples(d, vcs, {Counterexample{"zz", vec({0.5}), 0.5}}, 0, 0, 0, rng), Error);
}

TEST(Trace, CsvRows) {
  const std::vector<VerificationCondition> vcs{identity_condition()};
  std::ostringstream out;
  write_trace_header(out, vcs);
  write_trace_rows(out, 3, {EpochRecord{0, 0.5, {0.25}}, EpochRecord{1, 0.0, {std::nan("")}}});
  EXPECT_EQ(out.str(), "iteration,epoch,loss,max_violation:c\n3,0,0.5,0.25\n3,1,0,nan\n");
}

}  // namespace
}  // namespace certsynth
