#pragma once

// Experiment configuration as a JSON document. Every key is optional and defaults to the
// reference experiment; unknown keys are rejected so that typos cannot go unnoticed.

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdctl/cost.hpp"
#include "rdctl/dynamics.hpp"
#include "rdctl/error.hpp"
#include "rdctl/noise.hpp"
#include "rdctl/policies.hpp"
#include "rdctl/riccati.hpp"
#include "rdctl/spectral.hpp"
#include "rdctl/training.hpp"

namespace rdctl {

using json = nlohmann::ordered_json;

inline constexpr int kConfigSchemaVersion = 1;

struct ModelSection {
  std::string boundary = "neumann";
  double length = 20.0;
  int modes = 400;
  double shift = 0.0;
};

struct NoiseSection {
  double gamma = 0.751;
  double scale = 0.01;
};

struct NonlinearitySection {
  std::string kind = "zero";  // zero | linear | nagumo
  double c = 0.0;             // linear coefficient
  double gamma = 1.0;         // nagumo strength
  double a = 0.5;             // nagumo threshold
};

struct SdeSection {
  double horizon = 20.0;
  int steps = 2000;
  int collocation_points = 0;
  NonlinearitySection nonlinearity;
};

struct InitialSection {
  double a = 20.0 / 3.0;
  double b = 40.0 / 3.0;
};

struct CostSection {
  double running_weight = 0.5;
  double control_weight = 0.5;
  double terminal_weight = 0.0;
};

struct RiccatiSection {
  int steps = 2000;
  std::string convention = "standard";  // standard | printed
  std::string storage = "diagonal";     // diagonal | dense
};

struct PolicySection {
  std::string kind = "riccati";  // zero | riccati | nn | file
  int neurons = 400;
  std::string activation = "relu";
  std::string path;  // policy container for kind = file
};

struct TrainSection {
  int iterations = 400;
  int batch_size = 32;
  double learning_rate = 1e-3;
  std::string optimizer = "adam";  // adam | sgd
  double momentum = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double grad_clip = 10.0;  // 0 disables clipping
  bool fresh_noise = true;
  int steps = 200;  // time steps of the training rollouts
  int checkpoint_every = 100;
};

struct EvaluationSection {
  int samples = 500;
  std::uint64_t seed_offset = 0;
};

struct SimulateSection {
  int samples = 1;
  int grid_points = 101;
  int time_stride = 20;
};

struct SweepSection {
  std::string kind = "finitely_based";  // finitely_based | timestep | capacity
  std::string target = "inverse_square";  // inverse_square (g_k = u_k / k^2) | policy
  std::vector<int> values{2, 4, 8, 16, 32};
  int samples = 2000;
  double radius = 1.0;
  std::string reference = "fine";  // exact | fine (timestep sweeps)
  std::string fitter = "rbf";      // rbf | nn (capacity sweeps)
  int input_dim = 2;               // rbf ambient state dimension
  double kappa = 1.0;
  int fit_samples = 4000;
  bool with_cost = false;  // capacity sweeps: also estimate the cost of each member
};

struct ExperimentConfig {
  ModelSection model;
  NoiseSection noise;
  SdeSection sde;
  InitialSection initial;
  CostSection cost;
  RiccatiSection riccati;
  PolicySection policy;
  TrainSection train;
  EvaluationSection evaluation;
  SimulateSection simulate;
  SweepSection sweep;
  std::uint64_t seed = 0;
  int threads = 1;

  SpectralModel build_model() const {
    BoundaryCondition bc;
    if (model.boundary == "neumann") bc = BoundaryCondition::Neumann;
    else if (model.boundary == "dirichlet") bc = BoundaryCondition::Dirichlet;
    else throw ConfigError("model.boundary must be 'neumann' or 'dirichlet'");
    return SpectralModel(bc, model.length, model.modes, model.shift);
  }

  NoiseModel build_noise(const SpectralModel& m) const { return NoiseModel(m, noise.gamma, noise.scale); }

  Nonlinearity build_nonlinearity() const {
    const auto& nl = sde.nonlinearity;
    if (nl.kind == "zero") return ZeroNonlinearity{};
    if (nl.kind == "linear") return LinearNonlinearity{nl.c};
    if (nl.kind == "nagumo") return NagumoNonlinearity{nl.gamma, nl.a};
    throw ConfigError("sde.nonlinearity.kind must be 'zero', 'linear' or 'nagumo'");
  }

  Simulator build_simulator(int steps = 0) const {
    const SpectralModel m = build_model();
    SdeConfig cfg;
    cfg.horizon = sde.horizon;
    cfg.steps = steps > 0 ? steps : sde.steps;
    cfg.nonlinearity = build_nonlinearity();
    cfg.collocation_points = sde.collocation_points;
    cfg.seed = seed;
    return Simulator(m, build_noise(m), cfg);
  }

  StateVector build_initial(const SpectralModel& m) const { return initial_profile_indicator(initial.a, initial.b, m); }

  CostSpec build_cost() const {
    CostSpec c;
    c.running = QuadraticCost{cost.running_weight};
    if (cost.terminal_weight > 0.0) c.terminal = QuadraticCost{cost.terminal_weight};
    c.control_weight = cost.control_weight;
    c.validate();
    if (!(cost.terminal_weight >= 0.0)) throw ConfigError("cost.terminal_weight must be non-negative");
    return c;
  }

  RiccatiWeights build_riccati_weights() const {
    return {cost.running_weight, cost.control_weight, cost.terminal_weight};
  }

  RiccatiConvention build_convention() const {
    if (riccati.convention == "standard") return RiccatiConvention::StandardLqr;
    if (riccati.convention == "printed") return RiccatiConvention::Printed;
    throw ConfigError("riccati.convention must be 'standard' or 'printed'");
  }

  TrainConfig build_train() const {
    TrainConfig t;
    t.iterations = train.iterations;
    t.batch_size = train.batch_size;
    t.learning_rate = train.learning_rate;
    if (train.optimizer == "adam") t.optimizer = AdamOptimizer{train.beta1, train.beta2, train.epsilon};
    else if (train.optimizer == "sgd") t.optimizer = SgdOptimizer{train.momentum};
    else throw ConfigError("train.optimizer must be 'adam' or 'sgd'");
    if (train.grad_clip > 0.0) t.grad_clip = train.grad_clip;
    else t.grad_clip.reset();
    t.seed = seed;
    t.fresh_noise_per_iteration = train.fresh_noise;
    t.threads = threads;
    t.validate();
    return t;
  }

  void validate() const {
    const SpectralModel m = build_model();
    (void)build_noise(m);
    (void)build_simulator();
    (void)build_initial(m);
    (void)build_cost();
    (void)build_convention();
    (void)build_train();
    if (riccati.steps < 1) throw ConfigError("riccati.steps must be positive");
    if (riccati.storage != "diagonal" && riccati.storage != "dense") {
      throw ConfigError("riccati.storage must be 'diagonal' or 'dense'");
    }
    if (policy.kind != "zero" && policy.kind != "riccati" && policy.kind != "nn" && policy.kind != "file") {
      throw ConfigError("policy.kind must be 'zero', 'riccati', 'nn' or 'file'");
    }
    if (policy.kind == "file" && policy.path.empty()) throw ConfigError("policy.path is required for kind 'file'");
    if (policy.neurons < 1) throw ConfigError("policy.neurons must be positive");
    (void)activation_from_string(policy.activation);
    if (train.steps < 1 || train.checkpoint_every < 0) throw ConfigError("train.steps/checkpoint_every out of range");
    if (evaluation.samples < 2) throw ConfigError("evaluation.samples must be at least 2");
    if (simulate.samples < 1 || simulate.grid_points < 2 || simulate.time_stride < 1) {
      throw ConfigError("simulate section out of range");
    }
    if (sweep.kind != "finitely_based" && sweep.kind != "timestep" && sweep.kind != "capacity") {
      throw ConfigError("sweep.kind must be 'finitely_based', 'timestep' or 'capacity'");
    }
    if (sweep.values.empty() || sweep.samples < 1 || !(sweep.radius > 0.0)) {
      throw ConfigError("sweep needs values, samples >= 1 and radius > 0");
    }
    if (sweep.reference != "exact" && sweep.reference != "fine") throw ConfigError("sweep.reference must be 'exact' or 'fine'");
    if (sweep.target != "inverse_square" && sweep.target != "policy") {
      throw ConfigError("sweep.target must be 'inverse_square' or 'policy'");
    }
    if (sweep.fitter != "rbf" && sweep.fitter != "nn") throw ConfigError("sweep.fitter must be 'rbf' or 'nn'");
    if (threads < 1) throw ConfigError("threads must be positive");
  }
};

namespace detail {

/// Reads keys of one JSON object and remembers which were consumed.
class SectionReader {
 public:
  SectionReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config: '" + path_ + "' must be an object");
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config: '" + path_ + "." + key + "' has the wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, _] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("config: unknown key '" + path_ + "." + k + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  detail::SectionReader root(j, "config");
  auto section = [&](const char* key, auto&& fill) {
    if (const json* s = root.child(key)) {
      detail::SectionReader r(*s, key);
      fill(r);
      r.finish();
    }
  };
  section("model", [&](auto& r) {
    r.read("boundary", c.model.boundary);
    r.read("length", c.model.length);
    r.read("modes", c.model.modes);
    r.read("shift", c.model.shift);
  });
  section("noise", [&](auto& r) {
    r.read("gamma", c.noise.gamma);
    r.read("scale", c.noise.scale);
  });
  section("sde", [&](auto& r) {
    r.read("horizon", c.sde.horizon);
    r.read("steps", c.sde.steps);
    r.read("collocation_points", c.sde.collocation_points);
    if (const json* nl = r.child("nonlinearity")) {
      detail::SectionReader n(*nl, "sde.nonlinearity");
      n.read("kind", c.sde.nonlinearity.kind);
      n.read("c", c.sde.nonlinearity.c);
      n.read("gamma", c.sde.nonlinearity.gamma);
      n.read("a", c.sde.nonlinearity.a);
      n.finish();
    }
  });
  section("initial", [&](auto& r) {
    r.read("a", c.initial.a);
    r.read("b", c.initial.b);
  });
  section("cost", [&](auto& r) {
    r.read("running_weight", c.cost.running_weight);
    r.read("control_weight", c.cost.control_weight);
    r.read("terminal_weight", c.cost.terminal_weight);
  });
  section("riccati", [&](auto& r) {
    r.read("steps", c.riccati.steps);
    r.read("convention", c.riccati.convention);
    r.read("storage", c.riccati.storage);
  });
  section("policy", [&](auto& r) {
    r.read("kind", c.policy.kind);
    r.read("neurons", c.policy.neurons);
    r.read("activation", c.policy.activation);
    r.read("path", c.policy.path);
  });
  section("train", [&](auto& r) {
    r.read("iterations", c.train.iterations);
    r.read("batch_size", c.train.batch_size);
    r.read("learning_rate", c.train.learning_rate);
    r.read("optimizer", c.train.optimizer);
    r.read("momentum", c.train.momentum);
    r.read("beta1", c.train.beta1);
    r.read("beta2", c.train.beta2);
    r.read("epsilon", c.train.epsilon);
    r.read("grad_clip", c.train.grad_clip);
    r.read("fresh_noise", c.train.fresh_noise);
    r.read("steps", c.train.steps);
    r.read("checkpoint_every", c.train.checkpoint_every);
  });
  section("evaluation", [&](auto& r) {
    r.read("samples", c.evaluation.samples);
    r.read("seed_offset", c.evaluation.seed_offset);
  });
  section("simulate", [&](auto& r) {
    r.read("samples", c.simulate.samples);
    r.read("grid_points", c.simulate.grid_points);
    r.read("time_stride", c.simulate.time_stride);
  });
  section("sweep", [&](auto& r) {
    r.read("kind", c.sweep.kind);
    r.read("target", c.sweep.target);
    r.read("values", c.sweep.values);
    r.read("samples", c.sweep.samples);
    r.read("radius", c.sweep.radius);
    r.read("reference", c.sweep.reference);
    r.read("fitter", c.sweep.fitter);
    r.read("input_dim", c.sweep.input_dim);
    r.read("kappa", c.sweep.kappa);
    r.read("fit_samples", c.sweep.fit_samples);
    r.read("with_cost", c.sweep.with_cost);
  });
  root.read("seed", c.seed);
  root.read("threads", c.threads);
  int version = kConfigSchemaVersion;
  root.read("schema_version", version);
  if (version != kConfigSchemaVersion) throw ConfigError("config: unsupported schema_version");
  root.finish();
  return c;
}

/// Fully resolved configuration; parsing the result yields the same configuration.
inline json config_to_json(const ExperimentConfig& c) {
  json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["model"] = {{"boundary", c.model.boundary}, {"length", c.model.length}, {"modes", c.model.modes},
                {"shift", c.model.shift}};
  j["noise"] = {{"gamma", c.noise.gamma}, {"scale", c.noise.scale}};
  j["sde"] = {{"horizon", c.sde.horizon},
              {"steps", c.sde.steps},
              {"collocation_points", c.sde.collocation_points},
              {"nonlinearity",
               {{"kind", c.sde.nonlinearity.kind},
                {"c", c.sde.nonlinearity.c},
                {"gamma", c.sde.nonlinearity.gamma},
                {"a", c.sde.nonlinearity.a}}}};
  j["initial"] = {{"a", c.initial.a}, {"b", c.initial.b}};
  j["cost"] = {{"running_weight", c.cost.running_weight},
               {"control_weight", c.cost.control_weight},
               {"terminal_weight", c.cost.terminal_weight}};
  j["riccati"] = {{"steps", c.riccati.steps}, {"convention", c.riccati.convention}, {"storage", c.riccati.storage}};
  j["policy"] = {{"kind", c.policy.kind},
                 {"neurons", c.policy.neurons},
                 {"activation", c.policy.activation},
                 {"path", c.policy.path}};
  j["train"] = {{"iterations", c.train.iterations},   {"batch_size", c.train.batch_size},
                {"learning_rate", c.train.learning_rate}, {"optimizer", c.train.optimizer},
                {"momentum", c.train.momentum},       {"beta1", c.train.beta1},
                {"beta2", c.train.beta2},             {"epsilon", c.train.epsilon},
                {"grad_clip", c.train.grad_clip},     {"fresh_noise", c.train.fresh_noise},
                {"steps", c.train.steps},             {"checkpoint_every", c.train.checkpoint_every}};
  j["evaluation"] = {{"samples", c.evaluation.samples}, {"seed_offset", c.evaluation.seed_offset}};
  j["simulate"] = {{"samples", c.simulate.samples},
                   {"grid_points", c.simulate.grid_points},
                   {"time_stride", c.simulate.time_stride}};
  j["sweep"] = {{"kind", c.sweep.kind},           {"target", c.sweep.target},
                {"values", c.sweep.values},
                {"samples", c.sweep.samples},     {"radius", c.sweep.radius},
                {"reference", c.sweep.reference}, {"fitter", c.sweep.fitter},
                {"input_dim", c.sweep.input_dim}, {"kappa", c.sweep.kappa},
                {"fit_samples", c.sweep.fit_samples}, {"with_cost", c.sweep.with_cost}};
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  return j;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config '" + path + "'");
  json j;
  try {
    j = json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return config_from_json(j);
}

}  // namespace rdctl
