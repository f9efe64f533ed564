#include <gtest/gtest.h>

#include <string>

#include "mpcc/config.hpp"

using namespace mpcc;

namespace {

struct Diagnostic {
  std::string field;
  int line = 0;
  std::string what;
};

Diagnostic diagnose(const std::string& text) {
  try {
    parse_config(text, "cfg.json");
  } catch (const ConfigFileError& e) {
    return {e.field(), e.line(), e.what()};
  }
  return {"none", 0, ""};
}

std::string config_path(const char* name) { return std::string(MPCC_SOURCE_DIR) + "/configs/" + name; }

}  // namespace

TEST(Config, EmptyObjectGivesDefaults) {
  const ConfigFile cfg = parse_config("{}");
  const Scenario def;
  EXPECT_EQ(cfg.scenario.geometry, def.geometry);
  EXPECT_EQ(cfg.scenario.N, def.N);
  EXPECT_EQ(cfg.scenario.T, def.T);
  EXPECT_EQ(cfg.scenario.limits.a_max, def.limits.a_max);
  EXPECT_EQ(cfg.scenario.local_weights.gamma_s, def.local_weights.gamma_s);
  EXPECT_EQ(cfg.benchmark.repetitions, 5);
  EXPECT_EQ(serialize_config(cfg), serialize_config(ConfigFile{}));
}

TEST(Config, ReadsEveryBlock) {
  const ConfigFile cfg = parse_config(R"({
    "geometry": {"waypoints": [[0, 0], [0.1, 0], [0.1, 0.1]], "radii": [0.01]},
    "controller": "global",
    "backend": "condensed",
    "N": 70,
    "T": 0.002,
    "limits": {"a_max": 10, "v_max": 0.1, "v_terminal": 0.001, "tol": 1e-5},
    "global_weights": {"gamma_c": 1, "Q_v": [[0.02, 0.001], [0.001, 0.03]], "R": [1, 2, 3]},
    "local_weights": {"gamma_d": 2, "P_v": [4, 5]},
    "trust_halfwidth": 3e-4,
    "reach_budget": 2e-6,
    "max_steps": 100,
    "seed": 9,
    "output": {"dir": "x", "trace": false, "plot": false},
    "benchmark": {"controllers": ["local"], "backends": ["oracle"], "N_list": [5, 6], "repetitions": 7,
                  "steps": 40, "warmup": 3}
  })");
  const Scenario& sc = cfg.scenario;
  EXPECT_EQ(sc.geometry, "custom");
  ASSERT_EQ(sc.custom.waypoints.size(), 3u);
  EXPECT_EQ(sc.custom.waypoints[2], Vec2(0.1, 0.1));
  EXPECT_EQ(sc.custom.radii, std::vector<double>{0.01});
  EXPECT_EQ(sc.controller, ControllerKind::global);
  EXPECT_EQ(sc.backend, Backend::condensed);
  EXPECT_EQ(sc.N, 70);
  EXPECT_EQ(sc.T, 0.002);
  EXPECT_EQ(sc.limits.tol, 1e-5);
  EXPECT_EQ(sc.global_weights.gamma_c, 1.0);
  EXPECT_EQ(sc.global_weights.Q_v(0, 1), 0.001);
  EXPECT_EQ(sc.global_weights.R(2, 2), 3.0);
  EXPECT_EQ(sc.global_weights.R(0, 1), 0.0);
  EXPECT_EQ(sc.local_weights.P_v(1, 1), 5.0);
  EXPECT_EQ(sc.trust_halfwidth, 3e-4);
  EXPECT_EQ(sc.reach_budget, 2e-6);
  EXPECT_EQ(sc.max_steps, 100);
  EXPECT_EQ(sc.seed, 9u);
  EXPECT_FALSE(cfg.output.trace);
  EXPECT_EQ(cfg.output.dir, "x");
  EXPECT_EQ(cfg.benchmark.backends, std::vector<Backend>{Backend::oracle});
  EXPECT_EQ(cfg.benchmark.N_list, (std::vector<int>{5, 6}));
  EXPECT_EQ(cfg.benchmark.warmup, 3);
}

TEST(Config, SerializeIsIdempotent) {
  const std::string texts[] = {
      "{}",
      R"({"geometry": {"waypoints": [[0, 0], [0.1, 0.3], [0.2, 0]], "radii": [0.001]},
          "global_weights": {"Q_v": [[0.02, 0.001], [0.001, 0.03]]}, "T": 0.0007, "seed": 12345678901})",
      R"({"geometry": "paths/a.csv", "limits": {"tol": 1.2345678901234567e-5}})",
  };
  for (const auto& text : texts) {
    const std::string once = serialize_config(parse_config(text));
    EXPECT_EQ(serialize_config(parse_config(once)), once);
  }
  for (const char* name : {"sigma_smooth.json", "sigma_sharp.json", "sigma_sharp_low.json", "benchmark.json",
                           "scaling.json"}) {
    const std::string once = serialize_config(load_config(config_path(name)));
    EXPECT_EQ(serialize_config(parse_config(once)), once) << name;
  }
}

TEST(Config, NegativeAccelerationNamesFieldAndLine) {
  const auto d = diagnose("{\n  \"geometry\": \"sigma_smooth\",\n  \"limits\": {\n    \"a_max\": -5\n  }\n}\n");
  EXPECT_EQ(d.field, "limits.a_max");
  EXPECT_EQ(d.line, 4);
  EXPECT_NE(d.what.find("cfg.json:4"), std::string::npos) << d.what;
  EXPECT_NE(d.what.find("a_max"), std::string::npos);
}

TEST(Config, UnknownKeysAreRejected) {
  auto d = diagnose("{\n  \"N\": 35,\n  \"horizon\": 3\n}");
  EXPECT_EQ(d.field, "horizon");
  EXPECT_EQ(d.line, 3);
  d = diagnose("{\n  \"limits\": {\n    \"vmax\": 1\n  }\n}");
  EXPECT_EQ(d.field, "limits.vmax");
  EXPECT_EQ(d.line, 3);
  d = diagnose(R"({"benchmark": {"reps": 5}})");
  EXPECT_EQ(d.field, "benchmark.reps");
}

TEST(Config, SyntaxErrorsCarryTheLine) {
  const auto d = diagnose("{\n  \"N\": 35,\n  \"T\": 0.001,,\n}");
  EXPECT_EQ(d.line, 3);
  EXPECT_NE(d.what.find("cfg.json:3"), std::string::npos) << d.what;
}

TEST(Config, TypeErrors) {
  EXPECT_EQ(diagnose(R"({"N": 3.5})").field, "N");
  EXPECT_EQ(diagnose(R"({"T": "fast"})").field, "T");
  EXPECT_EQ(diagnose(R"({"controller": "mpc"})").field, "controller");
  EXPECT_EQ(diagnose(R"({"backend": 1})").field, "backend");
  EXPECT_EQ(diagnose(R"({"seed": -1})").field, "seed");
  EXPECT_EQ(diagnose(R"({"output": {"plot": 1}})").field, "output.plot");
  EXPECT_EQ(diagnose(R"({"local_weights": {"Q_v": [1, 2, 3]}})").field, "local_weights.Q_v");
  EXPECT_EQ(diagnose(R"({"geometry": {"waypoints": [[0, 0, 0]]}})").field, "geometry.waypoints");
  EXPECT_EQ(diagnose("[]").field, "");
}

TEST(Config, SemanticErrorsNameTheField) {
  EXPECT_EQ(diagnose(R"({"N": 1})").field, "N");
  EXPECT_EQ(diagnose(R"({"limits": {"v_terminal": 1}})").field, "limits.v_terminal");
  EXPECT_EQ(diagnose(R"({"global_weights": {"Q_v": [1, -1]}})").field, "global_weights.Q_v");
  EXPECT_EQ(diagnose(R"({"local_weights": {"gamma_s": -1}})").field, "local_weights.gamma_s");
  EXPECT_EQ(diagnose(R"({"benchmark": {"repetitions": 1}})").field, "benchmark.repetitions");
  EXPECT_EQ(diagnose(R"({"benchmark": {"N_list": []}})").field, "benchmark.N_list");
}

TEST(Config, MissingFileIsAnError) { EXPECT_THROW(load_config("/nonexistent/cfg.json"), ConfigFileError); }
