// Acceptance gate: one PASS/FAIL line per criterion. Exit status is nonzero when any
// criterion fails. Arguments select a subset of criteria by number.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "rdctl/rdctl.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace rdctl;
namespace ts = testing_support;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int worker_count() { return static_cast<int>(std::max(1u, std::min(8u, std::thread::hardware_concurrency()))); }

RolloutOptions rollout_options() { return RolloutOptions{32, worker_count()}; }

/// Reference problem: Neumann, L = 20, T = 20, 400 modes, noise 0.01 lambda^-0.751,
/// indicator of [20/3, 40/3], q = r = 1/2.
struct Reference {
  ExperimentConfig cfg;
  Simulator sim;
  StateVector u0;
  CostSpec spec;

  explicit Reference(int steps = 2000) : cfg(), sim(cfg.build_simulator(steps)), u0(), spec(cfg.build_cost()) {
    u0 = cfg.build_initial(sim.model());
  }

  RiccatiSolution riccati() const {
    return solve_riccati_diagonal(sim.model(), cfg.sde.horizon, cfg.riccati.steps, cfg.build_riccati_weights());
  }
};

constexpr int kEvaluationSamples = 1000;

Outcome criterion_lq_benchmark() {
  const Reference ref;
  const CostEstimate e = estimate_cost(ref.sim, FeedbackPolicy::riccati(ref.riccati()), ref.u0, ref.spec,
                                       kEvaluationSamples, 0, rollout_options());
  const bool pass = e.mean >= 4.8 && e.mean <= 5.9;
  return {pass, fmt("Riccati cost %.4f +- %.4f (%d samples, dt 0.01), band [4.8, 5.9]", e.mean, e.std_error,
                    e.samples)};
}

Outcome criterion_trained_network() {
  const Reference ref;
  const Simulator train_sim = ref.cfg.build_simulator(ref.cfg.train.steps);
  TrainConfig tc = ref.cfg.build_train();
  tc.threads = worker_count();
  const FeedbackPolicy initial = FeedbackPolicy::neural(
      init_params(ref.sim.model().modes(), ref.cfg.policy.neurons, ref.sim.model().modes(), Activation::ReLU, 0));
  const TrainResult trained = train(initial, tc, ref.u0, ref.spec, train_sim);
  const int n = 500;
  const CostEstimate net = estimate_cost(ref.sim, trained.policy, ref.u0, ref.spec, n, 0, rollout_options());
  const CostEstimate ric =
      estimate_cost(ref.sim, FeedbackPolicy::riccati(ref.riccati()), ref.u0, ref.spec, n, 0, rollout_options());
  const CostEstimate zero = estimate_cost(ref.sim, FeedbackPolicy::zero(), ref.u0, ref.spec, n, 0, rollout_options());
  const double combined = std::hypot(net.std_error, zero.std_error);
  const bool near_benchmark = net.mean <= 1.05 * ric.mean;
  const bool beats_zero = zero.mean - net.mean >= 3.0 * combined;
  return {near_benchmark && beats_zero,
          fmt("network %.4f +- %.4f after %d iterations, Riccati %.4f (limit %.4f), zero %.4f (margin %.1f SE)",
              net.mean, net.std_error, tc.iterations, ric.mean, 1.05 * ric.mean, zero.mean,
              (zero.mean - net.mean) / combined)};
}

/// Smallest |pre-activation| met along the replayed sample paths.
double min_preactivation(const NNParams& p, const Simulator& sim, const StateVector& u0, int samples) {
  const FeedbackPolicy policy = FeedbackPolicy::neural(p);
  double smallest = std::numeric_limits<double>::infinity();
  for (int s = 0; s < samples; ++s) {
    const Trajectory tr = sim.simulate_path(policy, u0, static_cast<std::uint64_t>(s));
    for (int n = 0; n < sim.steps(); ++n) {
      smallest = std::min(smallest, p.preactivation(tr.times[n], tr.states[n]).cwiseAbs().minCoeff());
    }
  }
  return smallest;
}

Outcome criterion_gradient() {
  CostSpec spec;
  spec.terminal = QuadraticCost{0.3};
  double worst = 0.0;
  int resampled = 0;
  int cases = 0;
  for (int modes : {1, 4, 16}) {
    for (int steps : {20, 50}) {
      for (bool nagumo : {false, true}) {
        const Nonlinearity nl = nagumo ? Nonlinearity(NagumoNonlinearity{1.0, 0.3}) : Nonlinearity(ZeroNonlinearity{});
        const Simulator sim = ts::make_sim(BoundaryCondition::Neumann, 5.0, modes, 1.0, steps, 0.3, 0.751, nl);
        const Eigen::VectorXd u0 = ts::random_vector(modes, 3, 0.4);
        unsigned seed = 10;
        NNParams p = ts::random_nn(modes, 8, modes, Activation::ReLU, seed);
        while (min_preactivation(p, sim, u0, 3) < 1e-7) {
          p = ts::random_nn(modes, 8, modes, Activation::ReLU, seed += 3);
          ++resampled;
        }
        worst = std::max(worst, ts::directional_mismatch(FeedbackPolicy::neural(p), sim, u0, spec, 1e-7, 100));
        ++cases;
      }
    }
  }
  return {worst < 1e-5, fmt("worst relative error %.3e over %d cases x 20 directions (%d kink resamples), limit 1e-5",
                            worst, cases, resampled)};
}

Outcome criterion_riccati() {
  const RiccatiWeights w{0.5, 0.5, 0.0};
  const SpectralModel four(BoundaryCondition::Neumann, 20.0, 4, 0.0);
  const RiccatiSolution diag = solve_riccati_diagonal(four, 20.0, 2000, w);
  const RiccatiSolution dense = solve_riccati_dense(four, 20.0, 2000, w);
  double diag_dense = 0.0;
  for (double t : diag.time_grid()) {
    const Eigen::MatrixXd d = diag.diagonal_gain(t).asDiagonal();
    diag_dense = std::max(diag_dense, (dense.dense_gain(t) - d).cwiseAbs().maxCoeff());
  }

  const Eigen::Vector3d eig(0.1, 0.9, 2.0);
  const Eigen::MatrixXd q = ts::random_orthogonal(3, 2);
  Eigen::MatrixXd lambda = q * eig.asDiagonal() * q.transpose();
  lambda = 0.5 * (lambda + lambda.transpose()).eval();
  const RiccatiWeights wd{0.5, 0.5, 0.4};
  const RiccatiSolution three = solve_riccati_dense(lambda, 1.0, 20, wd);
  const Eigen::MatrixXd dp_gain = -ts::discrete_riccati_value(lambda, 1.0, 100000, wd) / wd.r;
  const double dense_dp = (three.dense_gain(0.0) - dp_gain).cwiseAbs().maxCoeff();

  const SpectralModel one(BoundaryCondition::Neumann, 20.0, 1, 0.0);
  const RiccatiSolution scalar = solve_riccati_diagonal(one, 3.0, 300, RiccatiWeights{1.0, 1.0, 0.0});
  double tanh_err = 0.0;
  for (double t : scalar.time_grid()) tanh_err = std::max(tanh_err, std::abs(-scalar.diagonal_gain(t)[0] - std::tanh(3.0 - t)));

  const bool pass = diag_dense <= 1e-10 && dense_dp <= 1e-4 && tanh_err <= 1e-8;
  return {pass, fmt("diagonal vs dense %.2e (1e-10), dense vs dynamic programming %.2e (1e-4), tanh %.2e (1e-8)",
                    diag_dense, dense_dp, tanh_err)};
}

Outcome criterion_monte_carlo() {
  const Reference ref(4000);
  CostSpec spec;
  spec.running = QuadraticCost{ref.cfg.cost.running_weight};
  spec.control_weight = 0.0;
  const CostEstimate e =
      estimate_cost(ref.sim, FeedbackPolicy::zero(), ref.u0, spec, kEvaluationSamples, 0, rollout_options());
  const double exact = ref.cfg.cost.running_weight *
                       ts::ou_running_integral(ref.sim.model().eigenvalues(), ref.sim.noise().per_mode_std(), ref.u0,
                                               ref.cfg.sde.horizon);
  const double tolerance = 3.0 * e.std_error + 0.01 * exact;
  return {std::abs(e.mean - exact) <= tolerance,
          fmt("uncontrolled %.5f +- %.5f at dt 0.005 vs closed form %.5f, |diff| %.2e, allowed %.2e", e.mean,
              e.std_error, exact, std::abs(e.mean - exact), tolerance)};
}

Outcome criterion_time_order() {
  const Reference ref;
  const SpectralModel& model = ref.sim.model();
  SdeConfig sde = ref.sim.config();
  const Simulator quiet(model, NoiseModel(model, ref.cfg.noise.gamma, 0.0), sde);
  const SweepReport det = timestep_refinement(quiet, FeedbackPolicy::zero(), ref.u0, {50, 100, 200, 400}, 1,
                                              RefinementReference::ExactLinear);
  const SweepReport noisy = timestep_refinement(ref.sim, FeedbackPolicy::zero(), StateVector::Zero(model.modes()),
                                                {50, 100, 200, 400}, 32, RefinementReference::FineGrid);
  const double det_rate = det.fit ? det.fit->rate : std::nan("");
  const double noisy_rate = noisy.fit ? noisy.fit->rate : std::nan("");
  return {std::abs(det_rate - 1.0) <= 0.1 && noisy_rate >= 0.9,
          fmt("deterministic order %.3f (1.0 +- 0.1), additive-noise strong order %.3f (>= 0.9)", det_rate,
              noisy_rate)};
}

double rbf_target(const Eigen::VectorXd& x) { return std::sin(x[0]) * std::cos(0.7 * x[1]) + 0.5 * x[2] * x[2]; }

Outcome criterion_rbf() {
  const double horizon = 2.0;
  const double radius = 1.0;
  const int dim = 2;
  const double kappa = 1.0;
  const Eigen::MatrixXd probe = sample_domain(horizon, radius, dim, 4000, 11);
  const Eigen::MatrixXd left = sample_domain(horizon, radius, dim, 10000, 12);
  const Eigen::MatrixXd right = sample_domain(horizon, radius, dim, 10000, 13);
  double node_residual = 0.0;
  double worst_ratio = 0.0;
  bool fill_ok = true;
  bool decreasing = true;
  double previous = std::numeric_limits<double>::infinity();
  std::string errors;
  for (int k : {16, 64, 256}) {
    const NodeSet ns = quasi_uniform_nodes(k, horizon, radius, dim);
    fill_ok = fill_ok && ns.fill_distance <= ns.fill_bound();
    Eigen::MatrixXd values(k, 1);
    for (int i = 0; i < k; ++i) values(i, 0) = rbf_target(ns.nodes.row(i).transpose());
    const RbfData s = fit_rbf_interpolant(ns.nodes, values, kappa);
    for (int i = 0; i < k; ++i) {
      node_residual = std::max(node_residual, std::abs(s.evaluate(ns.nodes.row(i).transpose())[0] - values(i, 0)));
    }
    double quotient = 0.0;
    for (Eigen::Index p = 0; p < left.rows(); ++p) {
      const double d = (left.row(p) - right.row(p)).norm();
      if (d > 0.0) {
        quotient = std::max(quotient,
                            (s.evaluate(left.row(p).transpose()) - s.evaluate(right.row(p).transpose())).norm() / d);
      }
    }
    worst_ratio = std::max(worst_ratio, quotient / lipschitz_bound_rbf(s));
    double sup = 0.0;
    for (Eigen::Index p = 0; p < probe.rows(); ++p) {
      sup = std::max(sup, std::abs(s.evaluate(probe.row(p).transpose())[0] - rbf_target(probe.row(p).transpose())));
    }
    decreasing = decreasing && sup < previous;
    previous = sup;
    errors += fmt("%s%.2e", errors.empty() ? "" : " ", sup);
  }
  const bool pass = node_residual <= 1e-8 && worst_ratio <= 1.0 && fill_ok && decreasing;
  return {pass, fmt("node residual %.1e, Lipschitz quotient / bound %.3f, fill bound %s, sup errors K=16,64,256: %s",
                    node_residual, worst_ratio, fill_ok ? "holds" : "violated", errors.c_str())};
}

Outcome criterion_finitely_based() {
  const ExperimentConfig cfg;
  const int modes = cfg.model.modes;
  Eigen::VectorXd d(modes);
  for (int k = 0; k < modes; ++k) d[k] = 1.0 / ((k + 1.0) * (k + 1.0));
  const FeedbackPolicy target = FeedbackPolicy::linear(d.asDiagonal().toDenseMatrix());
  const SweepReport rep = finitely_based_decay(target, modes, cfg.sweep.values, cfg.sde.horizon, cfg.sweep.radius,
                                               cfg.sweep.samples, cfg.seed);
  // Squared error ~ sum_{k > m} k^-4 ~ m^-3 / 3.
  const double analytic = -3.0;
  const double rate = rep.fit ? rep.fit->rate : std::nan("");
  return {std::abs(rate - analytic) <= 0.2,
          fmt("fitted exponent %.3f (residual %.3f) vs analytic %.1f, limit 0.2", rate,
              rep.fit ? rep.fit->residual : std::nan(""), analytic)};
}

std::map<std::string, std::string> directory_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream is(e.path(), std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    out[fs::relative(e.path(), root).string()] = os.str();
  }
  return out;
}

Outcome criterion_determinism() {
  const fs::path dir = fs::temp_directory_path() / ("rdctl_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  json cfg = {{"model", {{"modes", 16}}},
              {"sde", {{"horizon", 2.0}, {"steps", 100}, {"nonlinearity", {{"kind", "nagumo"}}}}},
              {"riccati", {{"steps", 200}}},
              {"policy", {{"neurons", 12}}},
              {"train", {{"iterations", 5}, {"steps", 20}, {"batch_size", 8}, {"checkpoint_every", 2}}},
              {"evaluation", {{"samples", 40}}},
              {"simulate", {{"samples", 2}, {"grid_points", 21}, {"time_stride", 10}}},
              {"sweep", {{"kind", "timestep"}, {"values", {10, 20, 40}}, {"samples", 8}}},
              {"seed", 5}};
  const fs::path cfg_path = dir / "config.json";
  std::ofstream(cfg_path) << cfg.dump(2);
  std::string differing;
  for (const char* command : {"simulate", "riccati", "train", "sweep", "eval-cost"}) {
    std::map<std::string, std::string> runs[2];
    for (int r = 0; r < 2; ++r) {
      const fs::path out = dir / (std::string(command) + "_" + std::to_string(r));
      const std::string cmd = std::string(RDCTL_CLI_PATH) + " " + command + " --config " + cfg_path.string() +
                              " --out " + out.string() + " > /dev/null 2>&1";
      const int status = std::system(cmd.c_str());
      if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        differing += std::string(" ") + command + "(exit)";
        break;
      }
      runs[r] = directory_bytes(out);
    }
    if (runs[0].empty() || runs[0] != runs[1]) differing += std::string(" ") + command;
  }
  fs::remove_all(dir);
  return {differing.empty(), differing.empty() ? "simulate, riccati, train, sweep, eval-cost byte-identical"
                                                : "differing:" + differing};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"LQ benchmark cost", criterion_lq_benchmark},
      {"trained network cost", criterion_trained_network},
      {"gradient oracle", criterion_gradient},
      {"Riccati oracles", criterion_riccati},
      {"Monte Carlo estimator", criterion_monte_carlo},
      {"time-stepping order", criterion_time_order},
      {"RBF suite", criterion_rbf},
      {"finitely based decay", criterion_finitely_based},
      {"CLI determinism", criterion_determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(number)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %d %s: %s  %s [%.1fs]\n", number, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str(), seconds);
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
