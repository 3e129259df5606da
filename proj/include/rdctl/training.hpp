#pragma once

// Pathwise gradients of the discrete batch cost through the replayed rollout, a
// central-difference oracle, and the first-order optimization loop.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "rdctl/cost.hpp"
#include "rdctl/dynamics.hpp"
#include "rdctl/error.hpp"
#include "rdctl/policies.hpp"
#include "rdctl/rng.hpp"

namespace rdctl {

struct ParameterBlock {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index size = 0;
};

/// Trainable blocks in flattening order. NN: inner, bias, outer; linear: gain; rbf: weights.
/// Every block is stored column-major.
inline std::vector<ParameterBlock> parameter_blocks(const FeedbackPolicy& policy) {
  if (!policy.wrappers().empty()) throw UnsupportedPolicyError("wrapped policies have no trainable parameters");
  std::vector<ParameterBlock> out;
  const auto& base = policy.base();
  if (const auto* nn = std::get_if<NNParams>(&base)) {
    out.push_back({"inner", 0, nn->inner.size()});
    out.push_back({"bias", nn->inner.size(), nn->bias.size()});
    out.push_back({"outer", nn->inner.size() + nn->bias.size(), nn->outer.size()});
  } else if (const auto* lin = std::get_if<LinearFeedback>(&base)) {
    out.push_back({"gain", 0, lin->gain.size()});
  } else if (const auto* rbf = std::get_if<RbfData>(&base)) {
    out.push_back({"weights", 0, rbf->weights.size()});
  } else {
    throw UnsupportedPolicyError("policy '" + policy.variant_name() + "' has no trainable parameters");
  }
  return out;
}

inline Eigen::Index parameter_count(const FeedbackPolicy& policy) {
  const auto blocks = parameter_blocks(policy);
  return blocks.back().offset + blocks.back().size;
}

inline Eigen::VectorXd flatten_parameters(const FeedbackPolicy& policy) {
  Eigen::VectorXd theta(parameter_count(policy));
  const auto& base = policy.base();
  if (const auto* nn = std::get_if<NNParams>(&base)) {
    theta << nn->inner.reshaped(), nn->bias, nn->outer.reshaped();
  } else if (const auto* lin = std::get_if<LinearFeedback>(&base)) {
    theta = lin->gain.reshaped();
  } else {
    theta = std::get<RbfData>(base).weights.reshaped();
  }
  return theta;
}

inline void assign_parameters(FeedbackPolicy& policy, const Eigen::Ref<const Eigen::VectorXd>& theta) {
  if (theta.size() != parameter_count(policy)) throw ConfigError("parameter vector has the wrong length");
  auto& base = policy.base();
  if (auto* nn = std::get_if<NNParams>(&base)) {
    Eigen::Index o = 0;
    nn->inner = theta.segment(o, nn->inner.size()).reshaped(nn->inner.rows(), nn->inner.cols());
    o += nn->inner.size();
    nn->bias = theta.segment(o, nn->bias.size());
    o += nn->bias.size();
    nn->outer = theta.segment(o, nn->outer.size()).reshaped(nn->outer.rows(), nn->outer.cols());
  } else if (auto* lin = std::get_if<LinearFeedback>(&base)) {
    lin->gain = theta.reshaped(lin->gain.rows(), lin->gain.cols());
  } else {
    auto& w = std::get<RbfData>(base).weights;
    w = theta.reshaped(w.rows(), w.cols());
  }
}

inline FeedbackPolicy with_parameters(FeedbackPolicy policy, const Eigen::Ref<const Eigen::VectorXd>& theta) {
  assign_parameters(policy, theta);
  return policy;
}

struct GradientReport {
  double objective = 0.0;
  Eigen::VectorXd gradient;
  std::vector<std::pair<std::string, double>> block_norms;
};

namespace detail {

inline Eigen::MatrixXd resize_rows(const Eigen::Ref<const Eigen::MatrixXd>& m, Eigen::Index n) {
  if (m.rows() == n) return m;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, m.cols());
  const Eigen::Index keep = std::min(n, m.rows());
  out.topRows(keep) = m.topRows(keep);
  return out;
}

/// Backpropagates the control adjoint `bar_g` (modes x batch) through G(t, .) at the
/// states `u`; accumulates into `grad` and returns the state adjoint J_u G^T bar_g.
inline Eigen::MatrixXd policy_backward(const FeedbackPolicy::Base& base, double t, const Eigen::MatrixXd& u,
                                       const Eigen::MatrixXd& bar_g, Eigen::Ref<Eigen::VectorXd> grad) {
  const Eigen::Index n = u.rows();
  if (const auto* nn = std::get_if<NNParams>(&base)) {
    const int d = nn->state_dim();
    const int k = nn->neurons();
    const Eigen::MatrixXd x = resize_rows(u, d);
    const Eigen::MatrixXd z = nn->preactivation(t, x);
    const Eigen::MatrixXd h = z.unaryExpr([a = nn->activation](double v) { return activate(a, v); });
    const Eigen::MatrixXd gbar = resize_rows(bar_g, nn->output_dim());
    Eigen::MatrixXd delta = nn->outer.transpose() * gbar;
    delta.array() *= z.unaryExpr([a = nn->activation](double v) { return activate_derivative(a, v); }).array();
    Eigen::Map<Eigen::MatrixXd> g_inner(grad.data(), k, d + 1);
    Eigen::Map<Eigen::VectorXd> g_bias(grad.data() + nn->inner.size(), k);
    Eigen::Map<Eigen::MatrixXd> g_outer(grad.data() + nn->inner.size() + k, nn->output_dim(), k);
    const Eigen::VectorXd row_sum = delta.rowwise().sum();
    g_outer.noalias() += gbar * h.transpose();
    g_inner.col(0) += t * row_sum;
    g_inner.rightCols(d).noalias() += delta * x.transpose();
    g_bias += row_sum;
    return resize_rows(nn->inner.rightCols(d).transpose() * delta, n);
  }
  if (const auto* lin = std::get_if<LinearFeedback>(&base)) {
    const Eigen::MatrixXd x = resize_rows(u, lin->gain.cols());
    const Eigen::MatrixXd gbar = resize_rows(bar_g, lin->gain.rows());
    Eigen::Map<Eigen::MatrixXd> g_gain(grad.data(), lin->gain.rows(), lin->gain.cols());
    g_gain.noalias() += gbar * x.transpose();
    return resize_rows(lin->gain.transpose() * gbar, n);
  }
  const auto& rbf = std::get<RbfData>(base);
  const int d = rbf.ambient_dim();
  const Eigen::MatrixXd gbar = resize_rows(bar_g, rbf.outputs());
  Eigen::Map<Eigen::MatrixXd> g_w(grad.data(), rbf.node_count(), rbf.outputs());
  Eigen::MatrixXd du = Eigen::MatrixXd::Zero(n, u.cols());
  const Eigen::Index keep = std::min<Eigen::Index>(d, n);
  Eigen::VectorXd x(1 + d);
  for (Eigen::Index b = 0; b < u.cols(); ++b) {
    x.setZero();
    x[0] = t;
    x.segment(1, keep) = u.col(b).head(keep);
    const Eigen::VectorXd phi = rbf.kernel_row(x);
    g_w.noalias() += phi * gbar.col(b).transpose();
    // d/dx sum_i Phi_i <alpha_i, gbar> = -2 kappa sum_i w_i (x - x_i)
    const Eigen::VectorXd w = phi.cwiseProduct(rbf.weights * gbar.col(b));
    const Eigen::VectorXd dx = -2.0 * rbf.kappa * (x * w.sum() - rbf.nodes.transpose() * w);
    du.col(b).head(keep) = dx.segment(1, keep);
  }
  return du;
}

}  // namespace detail

/// Exact derivative of the discrete batch-mean path cost with respect to the policy
/// parameters, for the noise paths named by `sample_indices`.
inline GradientReport rollout_gradient(const FeedbackPolicy& policy, const StateVector& u0, const CostSpec& spec,
                                       const Simulator& sim, std::span<const std::uint64_t> sample_indices,
                                       const RolloutOptions& opts = {}) {
  spec.validate();
  const auto blocks = parameter_blocks(policy);
  const Eigen::Index p = blocks.back().offset + blocks.back().size;
  if (u0.size() != sim.modes()) throw ConfigError("initial state length does not match the mode count");
  if (sample_indices.empty()) throw ConfigError("rollout_gradient: at least one sample required");
  const int total = static_cast<int>(sample_indices.size());
  const int batch = std::max(1, opts.batch);
  const int chunks = (total + batch - 1) / batch;
  const int n = sim.modes();
  const int steps = sim.steps();
  const double dt = sim.dt();
  const Eigen::VectorXd& inv_d = sim.inverse_diagonal();
  std::vector<Eigen::VectorXd> chunk_grad(chunks, Eigen::VectorXd::Zero(p));
  std::vector<double> costs(total, 0.0);

  parallel_chunks(chunks, opts.threads, [&](int chunk) {
    const int begin = chunk * batch;
    const int size = std::min(batch, total - begin);
    std::vector<NoiseStream> noise;
    noise.reserve(size);
    for (int b = 0; b < size; ++b) noise.emplace_back(sim.config().seed, sample_indices[begin + b]);
    std::vector<Eigen::MatrixXd> u(steps + 1);
    std::vector<Eigen::MatrixXd> controls(steps);
    u[0] = u0.replicate(1, size);
    Eigen::MatrixXd dw(n, size);
    std::vector<double> acc(size, 0.0);
    for (int s = 0; s < steps; ++s) {
      const double t = sim.time(s);
      controls[s] = policy.eval_batch(t, u[s]);
      const Eigen::MatrixXd& g = controls[s];
      for (int b = 0; b < size; ++b) {
        acc[b] += dt * (running_cost(spec, t, u[s].col(b), sim) + spec.control_weight * g.col(b).squaredNorm());
        noise[b].next(sim.noise(), dt, dw.col(b));
      }
      u[s + 1] = (u[s] + dt * (sim.nemytskii_batch(u[s]) + g) + dw).array().colwise() * inv_d.array();
      if (!u[s + 1].allFinite()) throw NumericError("rollout produced a non-finite state at step " + std::to_string(s));
    }
    for (int b = 0; b < size; ++b) costs[begin + b] = acc[b] + terminal_cost(spec, u[steps].col(b), sim);

    Eigen::VectorXd& grad = chunk_grad[chunk];
    Eigen::MatrixXd adj(n, size);
    for (int b = 0; b < size; ++b) adj.col(b) = terminal_cost_gradient(spec, u[steps].col(b), sim);
    for (int s = steps - 1; s >= 0; --s) {
      const double t = sim.time(s);
      const Eigen::MatrixXd m = adj.array().colwise() * inv_d.array();
      const Eigen::MatrixXd bar_g = dt * (m + 2.0 * spec.control_weight * controls[s]);
      Eigen::MatrixXd next = m + dt * sim.nemytskii_adjoint_batch(u[s], m);
      next += detail::policy_backward(policy.base(), t, u[s], bar_g, grad);
      for (int b = 0; b < size; ++b) next.col(b) += dt * running_cost_gradient(spec, t, u[s].col(b), sim);
      if (!next.allFinite() || !grad.allFinite()) {
        throw NumericError("non-finite adjoint at step " + std::to_string(s));
      }
      adj = std::move(next);
      u[s + 1].resize(0, 0);
      controls[s].resize(0, 0);
    }
  });

  GradientReport report;
  report.gradient = Eigen::VectorXd::Zero(p);
  for (const auto& g : chunk_grad) report.gradient += g;
  report.gradient /= total;
  double sum = 0.0;
  for (double c : costs) sum += c;
  report.objective = sum / total;
  for (const auto& blk : blocks) report.block_norms.emplace_back(blk.name, report.gradient.segment(blk.offset, blk.size).norm());
  return report;
}

/// Batch-mean path cost at parameters `theta` for fixed noise paths.
inline double batch_objective(const FeedbackPolicy& policy, const Eigen::Ref<const Eigen::VectorXd>& theta,
                              const StateVector& u0, const CostSpec& spec, const Simulator& sim,
                              std::span<const std::uint64_t> sample_indices, const RolloutOptions& opts = {}) {
  const auto costs = rollout_costs(sim, with_parameters(policy, theta), u0, spec, sample_indices, opts);
  double sum = 0.0;
  for (double c : costs) sum += c;
  return sum / static_cast<double>(costs.size());
}

/// Central differences. Without `directions` the result has one entry per parameter;
/// otherwise one directional derivative per column of `directions`.
inline GradientReport finite_difference_gradient(const FeedbackPolicy& policy, const StateVector& u0,
                                                 const CostSpec& spec, const Simulator& sim,
                                                 std::span<const std::uint64_t> sample_indices, double h,
                                                 const Eigen::MatrixXd* directions = nullptr,
                                                 const RolloutOptions& opts = {}) {
  if (!(h > 0.0)) throw ConfigError("finite difference step must be positive");
  const Eigen::VectorXd theta = flatten_parameters(policy);
  if (directions && directions->rows() != theta.size()) throw ConfigError("direction length must match parameters");
  const Eigen::Index count = directions ? directions->cols() : theta.size();
  GradientReport report;
  report.objective = batch_objective(policy, theta, u0, spec, sim, sample_indices, opts);
  report.gradient.resize(count);
  for (Eigen::Index i = 0; i < count; ++i) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(theta.size());
    if (directions) {
      e = directions->col(i);
    } else {
      e[i] = 1.0;
    }
    const double up = batch_objective(policy, theta + h * e, u0, spec, sim, sample_indices, opts);
    const double down = batch_objective(policy, theta - h * e, u0, spec, sim, sample_indices, opts);
    report.gradient[i] = (up - down) / (2.0 * h);
  }
  if (!directions) {
    for (const auto& blk : parameter_blocks(policy)) {
      report.block_norms.emplace_back(blk.name, report.gradient.segment(blk.offset, blk.size).norm());
    }
  }
  return report;
}

/// Inner weights uniform on +-sqrt(6 / (fan_in + fan_out)), biases 0, outer matrix 0.
inline NNParams init_params(int state_dim, int neurons, int output_dim, Activation activation, std::uint64_t seed) {
  if (state_dim < 1 || neurons < 1 || output_dim < 1) throw ConfigError("init_params: dimensions must be positive");
  NNParams p;
  p.activation = activation;
  p.inner.resize(neurons, state_dim + 1);
  const double limit = std::sqrt(6.0 / (state_dim + 1 + neurons));
  auto engine = make_engine(seed, streams::kInit, 0);
  std::uniform_real_distribution<double> uniform(-limit, limit);
  for (Eigen::Index j = 0; j < p.inner.cols(); ++j) {
    for (Eigen::Index i = 0; i < p.inner.rows(); ++i) p.inner(i, j) = uniform(engine);
  }
  p.bias = Eigen::VectorXd::Zero(neurons);
  p.outer = Eigen::MatrixXd::Zero(output_dim, neurons);
  return p;
}

struct SgdOptimizer {
  double momentum = 0.0;
};

struct AdamOptimizer {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

using OptimizerKind = std::variant<SgdOptimizer, AdamOptimizer>;

struct TrainConfig {
  int iterations = 400;
  int batch_size = 32;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = AdamOptimizer{};
  std::optional<double> grad_clip = 10.0;
  std::uint64_t seed = 0;
  bool fresh_noise_per_iteration = true;
  int threads = 1;

  void validate() const {
    if (iterations < 1 || batch_size < 1) throw ConfigError("train: iterations and batch size must be positive");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw ConfigError("train: learning rate must be non-negative");
    }
    if (grad_clip && !(*grad_clip > 0.0)) throw ConfigError("train: gradient clip must be positive");
    if (const auto* s = std::get_if<SgdOptimizer>(&optimizer); s && !(s->momentum >= 0.0 && s->momentum < 1.0)) {
      throw ConfigError("train: momentum must lie in [0, 1)");
    }
    if (const auto* a = std::get_if<AdamOptimizer>(&optimizer)) {
      if (!(a->beta1 >= 0.0 && a->beta1 < 1.0) || !(a->beta2 >= 0.0 && a->beta2 < 1.0) || !(a->epsilon > 0.0)) {
        throw ConfigError("train: adaptive-moment parameters out of range");
      }
    }
  }
};

struct OptimizerState {
  Eigen::VectorXd first;   // momentum buffer or first moment
  Eigen::VectorXd second;  // second moment (adaptive moments only)
  long step = 0;
};

/// Applies one update to `theta` in place with the (already clipped) gradient.
inline void optimizer_step(const TrainConfig& cfg, OptimizerState& state, Eigen::VectorXd& theta,
                           const Eigen::VectorXd& grad) {
  if (state.first.size() != theta.size()) state.first = Eigen::VectorXd::Zero(theta.size());
  ++state.step;
  if (const auto* sgd = std::get_if<SgdOptimizer>(&cfg.optimizer)) {
    state.first = sgd->momentum * state.first + grad;
    theta -= cfg.learning_rate * state.first;
    return;
  }
  const auto& adam = std::get<AdamOptimizer>(cfg.optimizer);
  if (state.second.size() != theta.size()) state.second = Eigen::VectorXd::Zero(theta.size());
  state.first = adam.beta1 * state.first + (1.0 - adam.beta1) * grad;
  state.second = adam.beta2 * state.second + (1.0 - adam.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(adam.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(adam.beta2, static_cast<double>(state.step));
  theta.array() -= cfg.learning_rate * (state.first.array() / c1) / ((state.second.array() / c2).sqrt() + adam.epsilon);
}

/// Noise path indices of one training batch. They are hashed, so they do not collide
/// with the small consecutive indices used for evaluation.
inline std::vector<std::uint64_t> training_indices(const TrainConfig& cfg, int iteration) {
  const std::uint64_t round = cfg.fresh_noise_per_iteration ? static_cast<std::uint64_t>(iteration) : 0;
  std::vector<std::uint64_t> idx(cfg.batch_size);
  for (int b = 0; b < cfg.batch_size; ++b) {
    idx[b] = stream_key(cfg.seed, streams::kTraining, round * cfg.batch_size + b);
  }
  return idx;
}

struct LossRecord {
  int iteration = 0;
  double objective = 0.0;
  double grad_norm = 0.0;  // before clipping
};

struct TrainResult {
  FeedbackPolicy policy;
  std::vector<LossRecord> history;
  OptimizerState state;
};

using CheckpointHook = std::function<void(int iteration, const FeedbackPolicy&, const OptimizerState&)>;

/// First-order minimisation of the batch cost. Divergence means the objective stayed above
/// ten times its initial value for 50 consecutive iterations.
inline TrainResult train(const FeedbackPolicy& initial, const TrainConfig& cfg, const StateVector& u0,
                         const CostSpec& spec, const Simulator& sim, const CheckpointHook& checkpoint = {},
                         int checkpoint_every = 0, OptimizerState state = {}, int first_iteration = 0) {
  cfg.validate();
  TrainResult result{initial, {}, std::move(state)};
  Eigen::VectorXd theta = flatten_parameters(initial);
  RolloutOptions opts{32, cfg.threads};
  double reference = std::numeric_limits<double>::quiet_NaN();
  int above = 0;
  for (int it = first_iteration; it < cfg.iterations; ++it) {
    const auto idx = training_indices(cfg, it);
    GradientReport rep = rollout_gradient(result.policy, u0, spec, sim, idx, opts);
    const double norm = rep.gradient.norm();
    result.history.push_back({it, rep.objective, norm});
    if (std::isnan(reference)) reference = rep.objective;
    above = rep.objective > 10.0 * std::abs(reference) ? above + 1 : 0;
    if (above >= 50) {
      throw DivergenceError("training diverged at iteration " + std::to_string(it) +
                            "; reduce the learning rate");
    }
    if (cfg.grad_clip && norm > *cfg.grad_clip) rep.gradient *= *cfg.grad_clip / norm;
    optimizer_step(cfg, result.state, theta, rep.gradient);
    assign_parameters(result.policy, theta);
    if (checkpoint && checkpoint_every > 0 && (it + 1) % checkpoint_every == 0) {
      checkpoint(it + 1, result.policy, result.state);
    }
  }
  return result;
}

}  // namespace rdctl
