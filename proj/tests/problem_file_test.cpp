#include "certsynth/problem_file.hpp"

#include <gtest/gtest.h>

#include <filesystem>

#include "problems.hpp"

namespace certsynth {
namespace {

const std::string fixtures = CERTSYNTH_FIXTURE_DIR;

std::string message_of(const std::string& text) {
  try {
    parse_problem_file(text, "p.toml");
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MalformedProblem);
    return e.what();
  }
  return "";
}

TEST(ProblemFile, EveryFixtureValidates) {
  int count = 0;
  for (const auto& entry : std::filesystem::directory_iterator(fixtures)) {
    if (entry.path().extension() != ".toml") continue;
    SCOPED_TRACE(entry.path().string());
    const ProblemFile f = load_problem_file(entry.path().string());
    EXPECT_NO_THROW(validate_problem(f.problem));
    ++count;
  }
  EXPECT_GE(count, 7);
  EXPECT_NO_THROW(validate_problem(load_problem_file(fixtures + "/large/stability_4d.toml").problem));
}

TEST(ProblemFile, FieldsLand) {
  const ProblemFile f = load_problem_file(fixtures + "/psafe.toml");
  EXPECT_EQ(f.problem.system_kind, "stochastic");
  ASSERT_EQ(f.problem.noise_points.size(), 2u);
  EXPECT_EQ(f.problem.noise_points[1][0], 0.1);
  EXPECT_EQ(f.problem.initial_points.size(), 1u);
  ASSERT_TRUE(f.problem.unsafe);
  EXPECT_EQ(f.problem.unsafe->lo[0], 0.9);
  EXPECT_EQ(*f.problem.init_level, 0.3);
  EXPECT_EQ(f.settings.verify.w_min, 1e-4);
  EXPECT_EQ(f.settings.max_iterations, CegisConfig{}.max_iterations);
  EXPECT_GT(f.line_of("spec.unsafe.lo"), 0);
  EXPECT_EQ(f.line_of("rules.init_level"), f.lines.at("rules.init_level"));
}

TEST(ProblemFile, SeedReachesEveryStream) {
  const ProblemFile f = parse_problem_file(read_text_file(fixtures + "/stability_1d.toml") + "");
  EXPECT_EQ(f.settings.seed, 0u);
  const ProblemFile g = parse_problem_file("seed = 17\n");
  EXPECT_EQ(g.problem.seed, 17u);
  EXPECT_EQ(g.settings.seed, 17u);
  EXPECT_EQ(g.settings.verify.seed, 17u);
}

TEST(ProblemFile, RoundTripIsCanonical) {
  using namespace testing;
  const ProblemDescription all[] = {stability_1d(), stability_2d(), ranking(), barrier(), walk(),
                                    contraction_safety(), reach_avoid(), controlled_stability(),
                                    controlled_reach()};
  for (const auto& d : all) {
    CegisConfig s;
    s.train.margins["stab/dec"] = 0.25;
    s.spread_radius = 0.125;
    const std::string first = canonical_problem_text(validate_problem(d), s);
    const ProblemFile loaded = parse_problem_file(first);
    const std::string second = canonical_problem_text(validate_problem(loaded.problem), loaded.settings);
    EXPECT_EQ(first, second);
    EXPECT_EQ(serialize_problem_file(loaded), second);
    EXPECT_EQ(loaded.settings.train.margins.at("stab/dec"), 0.25);
  }
}

TEST(ProblemFile, FixtureRoundTrip) {
  for (const auto& entry : std::filesystem::directory_iterator(fixtures)) {
    if (entry.path().extension() != ".toml") continue;
    const ProblemFile f = load_problem_file(entry.path().string());
    const std::string text = serialize_problem_file(f);
    const ProblemFile g = parse_problem_file(text);
    EXPECT_EQ(serialize_problem_file(g), text) << entry.path();
    EXPECT_EQ(canonical_problem_text(validate_problem(g.problem), g.settings),
              canonical_problem_text(validate_problem(f.problem), f.settings));
  }
}

TEST(ProblemFile, NumbersSurviveExactly) {
  const std::string text = "[spec]\nradius = 0.1\nlevel = 3.0000000000000004\n";
  const ProblemFile f = parse_problem_file(text);
  const ProblemFile g = parse_problem_file(serialize_problem_file(f));
  EXPECT_EQ(*g.problem.radius, 0.1);
  EXPECT_EQ(*g.problem.level, 3.0000000000000004);
}

TEST(ProblemFile, UnknownKeyIsNamed) {
  const std::string m = message_of("[system]\nkind = \"discrete\"\nn_stat = 2\n");
  EXPECT_NE(m.find("p.toml:3"), std::string::npos) << m;
  EXPECT_NE(m.find("n_stat"), std::string::npos) << m;
}

TEST(ProblemFile, Rejections) {
  EXPECT_NE(message_of("[systems]\n").find("systems"), std::string::npos);
  EXPECT_NE(message_of("[spec]\nradius = 1\nradius = 2\n").find("twice"), std::string::npos);
  EXPECT_NE(message_of("[system]\n[system]\n").find("duplicate"), std::string::npos);
  EXPECT_NE(message_of("[system]\nn_state = 1.5\n").find("integer"), std::string::npos);
  EXPECT_NE(message_of("[system]\nkind = 3\n").find("string"), std::string::npos);
  EXPECT_NE(message_of("[spec]\nradius = \"x\"\n").find("number"), std::string::npos);
  EXPECT_NE(message_of("[domain]\nlo = [1, 2\n").find("array"), std::string::npos);
  EXPECT_NE(message_of("[spec]\nradius = 1 2\n").find("p.toml:2"), std::string::npos);
  EXPECT_NE(message_of("seed = -1\n").find("seed"), std::string::npos);
  EXPECT_NE(message_of("[rules]\ncheck_domain_invariance = 1\n").find("true or false"), std::string::npos);
  EXPECT_NE(message_of("[spec]\nradius = inf\n").find("inf"), std::string::npos);
  EXPECT_NE(message_of("[system]\ndynamics = [\"x1\n").find("unterminated"), std::string::npos);
  EXPECT_NE(message_of("x\n").find("'='"), std::string::npos);
}

TEST(ProblemFile, MultiLineArraysAndComments) {
  const ProblemFile f = parse_problem_file(
      "[system]  # trailing\n"
      "dynamics = [\n"
      "  \"x2\",   # first\n"
      "  \"-x1\",\n"
      "]\n"
      "n_state = 2\n");
  ASSERT_EQ(f.problem.dynamics.size(), 2u);
  EXPECT_EQ(f.problem.dynamics[1], "-x1");
  EXPECT_EQ(f.line_of("system.n_state"), 6);
  EXPECT_EQ(f.line_of("system.dynamics[1]"), 2);
}

TEST(ProblemFile, ValidationDiagnosticsMapToLines) {
  const ProblemFile f = load_problem_file(fixtures + "/stability_2d.toml");
  ProblemDescription d = f.problem;
  d.equilibrium = {0};
  try {
    validate_problem(d);
    FAIL();
  } catch (const InvalidProblemError& e) {
    ASSERT_FALSE(e.diagnostics().empty());
    EXPECT_GT(f.line_of(e.diagnostics().front().path), 0) << e.diagnostics().front().path;
  }
}

TEST(ProblemFile, MissingFile) {
  try {
    load_problem_file(fixtures + "/nope.toml");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::IoError);
  }
}

}  // namespace
}  // namespace certsynth
