#pragma once

// J(g) = E[ int_0^T l(t, u_t) + w_g ||g_t||^2 dt + m(u_T) ], discretised with a
// left Riemann sum on the simulation grid, and its Monte Carlo estimate.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <span>
#include <thread>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "rdctl/dynamics.hpp"
#include "rdctl/error.hpp"
#include "rdctl/noise.hpp"
#include "rdctl/policies.hpp"

namespace rdctl {

/// weight * ||u||_H^2, evaluated exactly in coefficients.
struct QuadraticCost {
  double weight = 0.5;
};

/// int_Lambda l(t, x, u(x)) dx on the collocation grid. `derivative` is dl/du and is
/// only needed for gradients.
struct PointwiseCost {
  std::function<double(double, double, double)> value;
  std::function<double(double, double, double)> derivative;
};

struct NoTerminalCost {};

using RunningCost = std::variant<QuadraticCost, PointwiseCost>;
using TerminalCost = std::variant<NoTerminalCost, QuadraticCost, PointwiseCost>;

struct CostSpec {
  RunningCost running = QuadraticCost{0.5};
  TerminalCost terminal = NoTerminalCost{};
  double control_weight = 0.5;

  void validate() const {
    if (!(control_weight >= 0.0)) throw ConfigError("cost: control weight must be non-negative");
    if (const auto* q = std::get_if<QuadraticCost>(&running); q && !(q->weight >= 0.0)) {
      throw ConfigError("cost: running weight must be non-negative");
    }
    if (const auto* q = std::get_if<QuadraticCost>(&terminal); q && !(q->weight >= 0.0)) {
      throw ConfigError("cost: terminal weight must be non-negative");
    }
  }
};

struct CostEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  int samples = 0;
};

inline CostEstimate summarize(std::span<const double> values) {
  CostEstimate est;
  est.samples = static_cast<int>(values.size());
  if (values.empty()) return est;
  double sum = 0.0;
  for (double v : values) sum += v;
  est.mean = sum / values.size();
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - est.mean) * (v - est.mean);
    est.std_error = std::sqrt(ss / (values.size() - 1)) / std::sqrt(static_cast<double>(values.size()));
  }
  return est;
}

namespace detail {

inline double pointwise_integral(const PointwiseCost& c, double t, const Eigen::Ref<const Eigen::VectorXd>& u,
                                 const Collocation& grid) {
  const Eigen::VectorXd field = grid.basis * u;
  double acc = 0.0;
  for (Eigen::Index j = 0; j < field.size(); ++j) acc += grid.weights[j] * c.value(t, grid.points[j], field[j]);
  return acc;
}

inline Eigen::VectorXd pointwise_gradient(const PointwiseCost& c, double t, const Eigen::Ref<const Eigen::VectorXd>& u,
                                          const Collocation& grid) {
  if (!c.derivative) throw UnsupportedPolicyError("pointwise cost has no derivative");
  Eigen::VectorXd field = grid.basis * u;
  for (Eigen::Index j = 0; j < field.size(); ++j) {
    field[j] = grid.weights[j] * c.derivative(t, grid.points[j], field[j]);
  }
  return grid.basis.transpose() * field;
}

}  // namespace detail

/// Running cost density l(t, u) (before multiplying by dt).
inline double running_cost(const CostSpec& spec, double t, const Eigen::Ref<const Eigen::VectorXd>& u,
                           const Simulator& sim) {
  if (const auto* q = std::get_if<QuadraticCost>(&spec.running)) return q->weight * u.squaredNorm();
  return detail::pointwise_integral(std::get<PointwiseCost>(spec.running), t, u, sim.grid());
}

inline Eigen::VectorXd running_cost_gradient(const CostSpec& spec, double t, const Eigen::Ref<const Eigen::VectorXd>& u,
                                             const Simulator& sim) {
  if (const auto* q = std::get_if<QuadraticCost>(&spec.running)) return 2.0 * q->weight * u;
  return detail::pointwise_gradient(std::get<PointwiseCost>(spec.running), t, u, sim.grid());
}

inline double terminal_cost(const CostSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& u, const Simulator& sim) {
  if (std::holds_alternative<NoTerminalCost>(spec.terminal)) return 0.0;
  if (const auto* q = std::get_if<QuadraticCost>(&spec.terminal)) return q->weight * u.squaredNorm();
  return detail::pointwise_integral(std::get<PointwiseCost>(spec.terminal), sim.config().horizon, u, sim.grid());
}

inline Eigen::VectorXd terminal_cost_gradient(const CostSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& u,
                                              const Simulator& sim) {
  if (std::holds_alternative<NoTerminalCost>(spec.terminal)) return Eigen::VectorXd::Zero(u.size());
  if (const auto* q = std::get_if<QuadraticCost>(&spec.terminal)) return 2.0 * q->weight * u;
  return detail::pointwise_gradient(std::get<PointwiseCost>(spec.terminal), sim.config().horizon, u, sim.grid());
}

/// Left Riemann sum of running + control cost plus the terminal cost.
inline double path_cost(const Trajectory& traj, const CostSpec& spec, const Simulator& sim) {
  const double dt = sim.dt();
  double acc = 0.0;
  for (std::size_t n = 0; n < traj.controls.size(); ++n) {
    acc += dt * (running_cost(spec, traj.times[n], traj.states[n], sim) +
                 spec.control_weight * traj.controls[n].squaredNorm());
  }
  return acc + terminal_cost(spec, traj.states.back(), sim);
}

struct RolloutOptions {
  int batch = 32;
  int threads = 1;
};

/// Runs `work(chunk)` for chunk = 0..chunks-1 on up to `threads` workers.
template <class Work>
void parallel_chunks(int chunks, int threads, Work&& work) {
  threads = std::max(1, std::min(threads, chunks));
  if (threads == 1) {
    for (int c = 0; c < chunks; ++c) work(c);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (int c = next++; c < chunks; c = next++) {
        try {
          work(c);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!failure) failure = std::current_exception();
          next = chunks;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

/// Path costs for the given sample indices. Samples are simulated in fixed chunks of
/// `opts.batch` consecutive entries, so the result does not depend on the thread count.
inline std::vector<double> rollout_costs(const Simulator& sim, const FeedbackPolicy& policy, const StateVector& u0,
                                         const CostSpec& spec, std::span<const std::uint64_t> sample_indices,
                                         const RolloutOptions& opts = {}) {
  spec.validate();
  if (u0.size() != sim.modes()) throw ConfigError("initial state length does not match the mode count");
  const int total = static_cast<int>(sample_indices.size());
  const int batch = std::max(1, opts.batch);
  const int chunks = (total + batch - 1) / batch;
  std::vector<double> costs(total, 0.0);
  const double dt = sim.dt();
  const int n = sim.modes();
  parallel_chunks(chunks, opts.threads, [&](int chunk) {
    const int begin = chunk * batch;
    const int size = std::min(batch, total - begin);
    std::vector<NoiseStream> streams;
    streams.reserve(size);
    for (int b = 0; b < size; ++b) streams.emplace_back(sim.config().seed, sample_indices[begin + b]);
    Eigen::MatrixXd u = u0.replicate(1, size);
    Eigen::MatrixXd dw(n, size);
    std::vector<double> acc(size, 0.0);
    for (int step = 0; step < sim.steps(); ++step) {
      const double t = sim.time(step);
      const Eigen::MatrixXd g = policy.eval_batch(t, u);
      for (int b = 0; b < size; ++b) {
        acc[b] += dt * (running_cost(spec, t, u.col(b), sim) + spec.control_weight * g.col(b).squaredNorm());
        streams[b].next(sim.noise(), dt, dw.col(b));
      }
      u = (u + dt * (sim.nemytskii_batch(u) + g) + dw).array().colwise() * sim.inverse_diagonal().array();
      if (!u.allFinite()) throw NumericError("rollout produced a non-finite state at step " + std::to_string(step));
    }
    for (int b = 0; b < size; ++b) costs[begin + b] = acc[b] + terminal_cost(spec, u.col(b), sim);
  });
  return costs;
}

/// Monte Carlo estimate over sample indices seed_offset, ..., seed_offset + n_samples - 1.
inline CostEstimate estimate_cost(const Simulator& sim, const FeedbackPolicy& policy, const StateVector& u0,
                                  const CostSpec& spec, int n_samples, std::uint64_t seed_offset = 0,
                                  const RolloutOptions& opts = {}) {
  if (n_samples < 2) throw ConfigError("estimate_cost: at least two samples required");
  std::vector<std::uint64_t> idx(n_samples);
  for (int i = 0; i < n_samples; ++i) idx[i] = seed_offset + static_cast<std::uint64_t>(i);
  const std::vector<double> costs = rollout_costs(sim, policy, u0, spec, idx, opts);
  return summarize(costs);
}

}  // namespace rdctl
