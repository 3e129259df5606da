#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "rdctl/config.hpp"

using namespace rdctl;

TEST(Config, EmptyObjectGivesReferenceDefaults) {
  const ExperimentConfig c = config_from_json(json::object());
  EXPECT_EQ(c.model.boundary, "neumann");
  EXPECT_EQ(c.model.length, 20.0);
  EXPECT_EQ(c.model.modes, 400);
  EXPECT_EQ(c.noise.gamma, 0.751);
  EXPECT_EQ(c.noise.scale, 0.01);
  EXPECT_EQ(c.sde.horizon, 20.0);
  EXPECT_EQ(c.sde.steps, 2000);
  EXPECT_EQ(c.initial.a, 20.0 / 3.0);
  EXPECT_EQ(c.initial.b, 40.0 / 3.0);
  EXPECT_EQ(c.cost.running_weight, 0.5);
  EXPECT_EQ(c.cost.control_weight, 0.5);
  EXPECT_EQ(c.riccati.steps, 2000);
  EXPECT_EQ(c.train.batch_size, 32);
  EXPECT_EQ(c.train.learning_rate, 1e-3);
  EXPECT_EQ(c.train.grad_clip, 10.0);
  EXPECT_EQ(c.policy.neurons, 400);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, UnknownKeysAreRejectedAtEveryLevel) {
  EXPECT_THROW(config_from_json(json{{"modle", json::object()}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"model", {{"mode", 4}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"sde", {{"nonlinearity", {{"kind", "zero"}, {"b", 1.0}}}}}}), ConfigError);
  try {
    config_from_json(json{{"train", {{"lr", 0.1}}}});
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.lr"), std::string::npos);
  }
}

TEST(Config, WrongTypesAndVersionsAreRejected) {
  EXPECT_THROW(config_from_json(json{{"model", {{"modes", "many"}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"model", 3}}), ConfigError);
  EXPECT_THROW(config_from_json(json::array()), ConfigError);
  EXPECT_THROW(config_from_json(json{{"schema_version", 2}}), ConfigError);
  EXPECT_NO_THROW(config_from_json(json{{"schema_version", kConfigSchemaVersion}}));
}

TEST(Config, ResolvedFormRoundTrips) {
  const json in = {{"model", {{"boundary", "dirichlet"}, {"modes", 12}, {"shift", 0.25}}},
                   {"sde", {{"steps", 300}, {"nonlinearity", {{"kind", "nagumo"}, {"gamma", 2.0}}}}},
                   {"train", {{"optimizer", "sgd"}, {"momentum", 0.9}, {"fresh_noise", false}}},
                   {"sweep", {{"values", {3, 6, 12}}, {"with_cost", true}}},
                   {"seed", 123456789012345ULL},
                   {"threads", 3}};
  const ExperimentConfig c = config_from_json(in);
  const json resolved = config_to_json(c);
  EXPECT_EQ(config_to_json(config_from_json(resolved)), resolved);
  EXPECT_EQ(resolved["model"]["boundary"], "dirichlet");
  EXPECT_EQ(resolved["sde"]["nonlinearity"]["gamma"], 2.0);
  EXPECT_EQ(resolved["seed"].get<std::uint64_t>(), 123456789012345ULL);
  EXPECT_EQ(resolved["initial"]["a"].get<double>(), 20.0 / 3.0);
  EXPECT_EQ(resolved.dump(), config_to_json(config_from_json(json::parse(resolved.dump()))).dump());
}

TEST(Config, BuildersReflectSections) {
  ExperimentConfig c = config_from_json(
      json{{"model", {{"boundary", "dirichlet"}, {"modes", 6}, {"length", 3.0}}},
           {"sde", {{"horizon", 2.0}, {"steps", 40}, {"nonlinearity", {{"kind", "linear"}, {"c", 0.3}}}}},
           {"cost", {{"terminal_weight", 0.7}}},
           {"train", {{"grad_clip", 0.0}}}});
  const Simulator sim = c.build_simulator();
  EXPECT_EQ(sim.model().modes(), 6);
  EXPECT_EQ(sim.model().boundary(), BoundaryCondition::Dirichlet);
  EXPECT_EQ(sim.steps(), 40);
  EXPECT_DOUBLE_EQ(sim.dt(), 0.05);
  EXPECT_EQ(c.build_simulator(80).steps(), 80);
  EXPECT_TRUE(std::holds_alternative<LinearNonlinearity>(sim.config().nonlinearity));
  EXPECT_TRUE(std::holds_alternative<QuadraticCost>(c.build_cost().terminal));
  EXPECT_FALSE(c.build_train().grad_clip.has_value());
  EXPECT_EQ(c.build_riccati_weights().q_terminal, 0.7);
}

TEST(Config, ValidationCatchesOutOfRangeValues) {
  auto invalid = [](const json& j) {
    EXPECT_THROW(config_from_json(j).validate(), ConfigError) << j.dump();
  };
  invalid({{"model", {{"boundary", "periodic"}}}});
  invalid({{"model", {{"modes", 0}}}});
  invalid({{"model", {{"length", -1.0}}}});
  invalid({{"sde", {{"steps", 0}}}});
  invalid({{"sde", {{"nonlinearity", {{"kind", "cubic"}}}}}});
  invalid({{"initial", {{"a", 5.0}, {"b", 1.0}}}});
  invalid({{"cost", {{"control_weight", -0.5}}}});
  invalid({{"cost", {{"terminal_weight", -0.5}}}});
  invalid({{"riccati", {{"convention", "upside-down"}}}});
  invalid({{"riccati", {{"storage", "sparse"}}}});
  invalid({{"riccati", {{"steps", 0}}}});
  invalid({{"policy", {{"kind", "oracle"}}}});
  invalid({{"policy", {{"kind", "file"}}}});
  invalid({{"policy", {{"activation", "swish"}}}});
  invalid({{"train", {{"optimizer", "lbfgs"}}}});
  invalid({{"train", {{"batch_size", 0}}}});
  invalid({{"evaluation", {{"samples", 1}}}});
  invalid({{"simulate", {{"grid_points", 1}}}});
  invalid({{"sweep", {{"kind", "random"}}}});
  invalid({{"sweep", {{"values", json::array()}}}});
  invalid({{"sweep", {{"reference", "analytic"}}}});
  invalid({{"sweep", {{"fitter", "spline"}}}});
  invalid({{"threads", 0}});
}

TEST(Config, LoadsFromDiskAndReportsParseErrors) {
  const auto dir = std::filesystem::temp_directory_path() / "rdctl_config_test";
  std::filesystem::create_directories(dir);
  const auto good = dir / "good.json";
  const auto bad = dir / "bad.json";
  std::ofstream(good) << R"({"model": {"modes": 8}, "seed": 4})";
  std::ofstream(bad) << R"({"model": {"modes": 8,}})";
  EXPECT_EQ(load_config(good.string()).model.modes, 8);
  EXPECT_THROW(load_config(bad.string()), ConfigError);
  EXPECT_THROW(load_config((dir / "missing.json").string()), ConfigError);
  std::filesystem::remove_all(dir);
}
