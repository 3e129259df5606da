// Batch experiment runner: simulate | riccati | train | sweep | eval-cost.
// Exit codes: 0 success, 2 configuration error, 3 numeric failure.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rdctl/rdctl.hpp"

namespace fs = std::filesystem;
using namespace rdctl;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Output directory that records every file it writes for the manifest.
class OutputDir {
 public:
  explicit OutputDir(fs::path root) : root_(std::move(root)) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec) throw ConfigError("cannot create output directory '" + root_.string() + "'");
  }

  void write(const std::string& name, const std::string& content) {
    const fs::path p = root_ / name;
    fs::create_directories(p.parent_path());
    std::ofstream os(p, std::ios::binary);
    if (!os) throw ConfigError("cannot write '" + p.string() + "'");
    os << content;
    files_.emplace_back(name, content);
  }

  void write_manifest(const std::string& command, const ExperimentConfig& cfg) {
    json m;
    m["schema_version"] = kConfigSchemaVersion;
    m["tool"] = "rdctl";
    m["command"] = command;
    m["seed"] = cfg.seed;
    json files = json::array();
    std::sort(files_.begin(), files_.end());
    for (const auto& [name, content] : files_) {
      char hash[17];
      std::snprintf(hash, sizeof hash, "%016" PRIx64, fnv1a(content));
      files.push_back({{"name", name}, {"bytes", content.size()}, {"fnv1a64", hash}});
    }
    m["files"] = files;
    const fs::path p = root_ / "manifest.json";
    std::ofstream os(p, std::ios::binary);
    os << m.dump(2) << '\n';
  }

 private:
  fs::path root_;
  std::vector<std::pair<std::string, std::string>> files_;
};

std::string cost_csv(const std::vector<std::pair<std::string, CostEstimate>>& rows) {
  std::ostringstream os;
  os << "policy,mean,std_error,samples\n";
  for (const auto& [name, e] : rows) os << name << ',' << num(e.mean) << ',' << num(e.std_error) << ',' << e.samples << '\n';
  return os.str();
}

RiccatiSolution solve_benchmark(const ExperimentConfig& cfg, const SpectralModel& model) {
  const RiccatiWeights w = cfg.build_riccati_weights();
  RiccatiSolution sol = cfg.riccati.storage == "dense"
                            ? solve_riccati_dense(model, cfg.sde.horizon, cfg.riccati.steps, w)
                            : solve_riccati_diagonal(model, cfg.sde.horizon, cfg.riccati.steps, w);
  return sol.with_convention(cfg.build_convention());
}

FeedbackPolicy build_policy(const ExperimentConfig& cfg, const SpectralModel& model) {
  if (cfg.policy.kind == "zero") return FeedbackPolicy::zero();
  if (cfg.policy.kind == "riccati") return FeedbackPolicy::riccati(solve_benchmark(cfg, model));
  if (cfg.policy.kind == "nn") {
    return FeedbackPolicy::neural(init_params(model.modes(), cfg.policy.neurons, model.modes(),
                                              activation_from_string(cfg.policy.activation), cfg.seed));
  }
  return load_policy(cfg.policy.path);
}

RolloutOptions rollout_options(const ExperimentConfig& cfg) { return RolloutOptions{32, cfg.threads}; }

CostEstimate evaluate(const ExperimentConfig& cfg, const Simulator& sim, const FeedbackPolicy& policy) {
  return estimate_cost(sim, policy, cfg.build_initial(sim.model()), cfg.build_cost(), cfg.evaluation.samples,
                       cfg.evaluation.seed_offset, rollout_options(cfg));
}

void cmd_simulate(const ExperimentConfig& cfg, OutputDir& out) {
  const Simulator sim = cfg.build_simulator();
  const SpectralModel& model = sim.model();
  const FeedbackPolicy policy = build_policy(cfg, model);
  const StateVector u0 = cfg.build_initial(model);
  const CostSpec spec = cfg.build_cost();
  const std::vector<double> xs = uniform_grid(model.length(), cfg.simulate.grid_points);
  std::ostringstream costs;
  costs << "sample,cost\n";
  for (int s = 0; s < cfg.simulate.samples; ++s) {
    const std::uint64_t index = cfg.evaluation.seed_offset + static_cast<std::uint64_t>(s);
    const Trajectory tr = sim.simulate_path(policy, u0, index);
    std::ostringstream field, coef;
    field << "t,x,u,g\n";
    coef << "t,mode,state,control\n";
    for (int n = 0; n <= sim.steps(); ++n) {
      if (n % cfg.simulate.time_stride != 0 && n != sim.steps()) continue;
      const StateVector& u = tr.states[n];
      // The control at the final time is evaluated for display only.
      const StateVector g = n < sim.steps() ? tr.controls[n] : policy.eval(tr.times[n], u);
      const std::vector<double> uf = evaluate_on_grid(u, xs, model);
      const std::vector<double> gf = evaluate_on_grid(g, xs, model);
      for (std::size_t j = 0; j < xs.size(); ++j) {
        field << num(tr.times[n]) << ',' << num(xs[j]) << ',' << num(uf[j]) << ',' << num(gf[j]) << '\n';
      }
      for (int k = 0; k < model.modes(); ++k) {
        coef << num(tr.times[n]) << ',' << k << ',' << num(u[k]) << ',' << num(g[k]) << '\n';
      }
    }
    out.write("field_" + std::to_string(s) + ".csv", field.str());
    out.write("coefficients_" + std::to_string(s) + ".csv", coef.str());
    costs << index << ',' << num(path_cost(tr, spec, sim)) << '\n';
  }
  out.write("path_costs.csv", costs.str());
}

void cmd_riccati(const ExperimentConfig& cfg, OutputDir& out) {
  const Simulator sim = cfg.build_simulator();
  const RiccatiSolution sol = solve_benchmark(cfg, sim.model());
  std::ostringstream gains;
  sol.write_csv(gains);
  out.write("gains.csv", gains.str());
  const FeedbackPolicy policy = FeedbackPolicy::riccati(sol);
  out.write("policy.txt", policy_to_string(policy));
  out.write("cost.csv", cost_csv({{"riccati", evaluate(cfg, sim, policy)},
                                  {"zero", evaluate(cfg, sim, FeedbackPolicy::zero())}}));
}

void cmd_train(const ExperimentConfig& cfg, OutputDir& out) {
  const Simulator train_sim = cfg.build_simulator(cfg.train.steps);
  const Simulator eval_sim = cfg.build_simulator();
  const SpectralModel& model = eval_sim.model();
  const TrainConfig tc = cfg.build_train();
  const FeedbackPolicy initial = cfg.policy.kind == "file" ? load_policy(cfg.policy.path)
                                 : FeedbackPolicy::neural(init_params(model.modes(), cfg.policy.neurons, model.modes(),
                                                                      activation_from_string(cfg.policy.activation),
                                                                      cfg.seed));
  const CheckpointHook hook = [&](int iteration, const FeedbackPolicy& p, const OptimizerState& st) {
    std::ostringstream os;
    write_checkpoint(os, iteration, p, st);
    char name[64];
    std::snprintf(name, sizeof name, "checkpoints/checkpoint_%06d.txt", iteration);
    out.write(name, os.str());
  };
  const TrainResult result =
      train(initial, tc, cfg.build_initial(model), cfg.build_cost(), train_sim, hook, cfg.train.checkpoint_every);
  std::ostringstream loss;
  loss << "iteration,objective,grad_norm\n";
  for (const auto& r : result.history) loss << r.iteration << ',' << num(r.objective) << ',' << num(r.grad_norm) << '\n';
  out.write("loss.csv", loss.str());
  out.write("policy.txt", policy_to_string(result.policy));
  out.write("cost.csv", cost_csv({{"trained", evaluate(cfg, eval_sim, result.policy)},
                                  {"riccati", evaluate(cfg, eval_sim, FeedbackPolicy::riccati(solve_benchmark(cfg, model)))},
                                  {"zero", evaluate(cfg, eval_sim, FeedbackPolicy::zero())}}));
}

FeedbackPolicy sweep_target(const ExperimentConfig& cfg, const SpectralModel& model) {
  if (cfg.sweep.target == "policy") return build_policy(cfg, model);
  Eigen::VectorXd d(model.modes());
  for (int i = 0; i < model.modes(); ++i) d[i] = 1.0 / ((i + 1.0) * (i + 1.0));
  return FeedbackPolicy::linear(d.asDiagonal().toDenseMatrix());
}

void cmd_sweep(const ExperimentConfig& cfg, OutputDir& out) {
  const Simulator sim = cfg.build_simulator();
  const SpectralModel& model = sim.model();
  const auto& sw = cfg.sweep;
  SweepReport rep;
  if (sw.kind == "finitely_based") {
    rep = finitely_based_decay(sweep_target(cfg, model), model.modes(), sw.values, cfg.sde.horizon, sw.radius,
                               sw.samples, cfg.seed);
  } else if (sw.kind == "timestep") {
    rep = timestep_refinement(sim, build_policy(cfg, model), cfg.build_initial(model), sw.values, sw.samples,
                              sw.reference == "exact" ? RefinementReference::ExactLinear : RefinementReference::FineGrid);
  } else {
    const FeedbackPolicy target = sweep_target(cfg, model);
    const CapacityFitter fitter =
        sw.fitter == "rbf"
            ? rbf_capacity_fitter(target, model.modes(), sw.input_dim, cfg.sde.horizon, sw.radius, sw.kappa, cfg.seed)
            : nn_random_feature_fitter(target, model.modes(), cfg.sde.horizon, sw.radius,
                                       activation_from_string(cfg.policy.activation), sw.fit_samples, cfg.seed);
    CostProbe probe;
    double benchmark = 0.0;
    if (sw.with_cost) {
      probe = [&](const FeedbackPolicy& p) { return evaluate(cfg, sim, p); };
      benchmark = evaluate(cfg, sim, FeedbackPolicy::riccati(solve_benchmark(cfg, model))).mean;
    }
    rep = ansatz_capacity_sweep(sw.values, fitter, target, model.modes(), cfg.sde.horizon, sw.radius, sw.samples,
                                cfg.seed, probe, benchmark);
  }
  std::ostringstream table, fit;
  rep.write_csv(table);
  rep.write_fit(fit);
  out.write("sweep.csv", table.str());
  out.write("fit.csv", fit.str());
}

void cmd_eval_cost(const ExperimentConfig& cfg, OutputDir& out) {
  const Simulator sim = cfg.build_simulator();
  out.write("cost.csv", cost_csv({{cfg.policy.kind, evaluate(cfg, sim, build_policy(cfg, sim.model()))}}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feedback control of stochastic reaction-diffusion equations"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> samples;
  std::optional<int> threads;
  const std::vector<std::string> names{"simulate", "riccati", "train", "sweep", "eval-cost"};
  for (const auto& name : names) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON experiment config (defaults apply when omitted)");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "overrides the config seed");
    sub->add_option("--samples", samples, "overrides the sample count of the command");
    sub->add_option("--threads", threads, "caps worker threads");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (threads) cfg.threads = *threads;
    if (samples) {
      if (command == "simulate") cfg.simulate.samples = *samples;
      else if (command == "sweep") cfg.sweep.samples = *samples;
      else cfg.evaluation.samples = *samples;
    }
    cfg.validate();
    OutputDir out(out_dir);
    out.write("resolved_config.json", config_to_json(cfg).dump(2) + "\n");
    if (command == "simulate") cmd_simulate(cfg, out);
    else if (command == "riccati") cmd_riccati(cfg, out);
    else if (command == "train") cmd_train(cfg, out);
    else if (command == "sweep") cmd_sweep(cfg, out);
    else cmd_eval_cost(cfg, out);
    out.write_manifest(command, cfg);
  } catch (const NumericError& e) {
    std::cerr << "rdctl " << command << ": numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "rdctl " << command << ": " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "rdctl " << command << ": " << e.what() << '\n';
    return 1;
  }
  return 0;
}
