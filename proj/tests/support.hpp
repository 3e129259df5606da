#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Dense>

#include "rdctl/dynamics.hpp"
#include "rdctl/noise.hpp"
#include "rdctl/riccati.hpp"
#include "rdctl/spectral.hpp"
#include "rdctl/training.hpp"

namespace testing_support {

inline rdctl::Simulator make_sim(rdctl::BoundaryCondition bc, double length, int modes, double horizon, int steps,
                                 double noise_scale, double gamma = 0.751,
                                 rdctl::Nonlinearity nl = rdctl::ZeroNonlinearity{}, std::uint64_t seed = 7,
                                 int collocation = 0) {
  const rdctl::SpectralModel m(bc, length, modes, 0.0);
  rdctl::SdeConfig cfg;
  cfg.horizon = horizon;
  cfg.steps = steps;
  cfg.nonlinearity = std::move(nl);
  cfg.seed = seed;
  cfg.collocation_points = collocation;
  return rdctl::Simulator(m, rdctl::NoiseModel(m, gamma, noise_scale), cfg);
}

/// The reference configuration with a custom step count.
inline rdctl::Simulator reference_sim(int steps, int modes = 400) {
  return make_sim(rdctl::BoundaryCondition::Neumann, 20.0, modes, 20.0, steps, 0.01);
}

inline Eigen::VectorXd random_vector(int n, unsigned seed, double scale = 1.0) {
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> g(0.0, scale);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = g(eng);
  return v;
}

/// Closed-form E int_0^T ||u_t||^2 dt for the uncontrolled linear equation, mode by mode:
/// int_0^T e^{-2 l t} u0^2 + s^2 (1 - e^{-2 l t}) / (2 l) dt, and u0^2 T + s^2 T^2 / 2 for l = 0.
inline double ou_running_integral(const Eigen::VectorXd& lambda, std::span<const double> sigma,
                                  const Eigen::VectorXd& u0, double T) {
  double acc = 0.0;
  for (Eigen::Index k = 0; k < lambda.size(); ++k) {
    const double l = lambda[k];
    const double s2 = sigma[k] * sigma[k];
    const double a2 = u0[k] * u0[k];
    if (l == 0.0) {
      acc += a2 * T + s2 * T * T / 2.0;
    } else {
      const double decay = (1.0 - std::exp(-2.0 * l * T)) / (2.0 * l);
      acc += a2 * decay + s2 / (2.0 * l) * (T - decay);
    }
  }
  return acc;
}

/// Closed-form E ||u_T||^2 for the uncontrolled linear equation.
inline double ou_terminal_moment(const Eigen::VectorXd& lambda, std::span<const double> sigma,
                                 const Eigen::VectorXd& u0, double T) {
  double acc = 0.0;
  for (Eigen::Index k = 0; k < lambda.size(); ++k) {
    const double l = lambda[k];
    const double s2 = sigma[k] * sigma[k];
    if (l == 0.0) {
      acc += u0[k] * u0[k] + s2 * T;
    } else {
      acc += std::exp(-2.0 * l * T) * u0[k] * u0[k] + s2 * (1.0 - std::exp(-2.0 * l * T)) / (2.0 * l);
    }
  }
  return acc;
}

/// E ||u_n||^2 of the implicit Euler recursion u <- (u + dW) / (1 + dt l) after n steps.
inline double discrete_terminal_moment(const Eigen::VectorXd& lambda, std::span<const double> sigma,
                                       const Eigen::VectorXd& u0, double dt, int n) {
  double acc = 0.0;
  for (Eigen::Index k = 0; k < lambda.size(); ++k) {
    const double a2 = 1.0 / ((1.0 + dt * lambda[k]) * (1.0 + dt * lambda[k]));
    double geometric = 0.0;
    double p = 1.0;
    for (int j = 1; j <= n; ++j) {
      p *= a2;
      geometric += p;
    }
    acc += p * u0[k] * u0[k] + sigma[k] * sigma[k] * dt * geometric;
  }
  return acc;
}

// Scalar p(s) with dp/ds = q - 2 lambda p - p^2 / r, p(0) = p_T, s = T - t.
inline double scalar_riccati(double lambda, double q, double r, double p_terminal, double s) {
  const double root = std::sqrt(lambda * lambda + q / r);
  const double hi = r * (-lambda + root);
  const double lo = r * (-lambda - root);
  const double c = (p_terminal - hi) / (p_terminal - lo);
  const double e = c * std::exp(-2.0 * root * s);
  return (hi - e * lo) / (1.0 - e);
}

inline Eigen::MatrixXd random_orthogonal(int n, unsigned seed) {
  const Eigen::MatrixXd a = Eigen::Map<const Eigen::MatrixXd>(random_vector(n * n, seed).data(), n, n);
  return Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ();
}

/// Value matrix at t = 0 of the explicit Euler discretisation, by backward dynamic programming.
inline Eigen::MatrixXd discrete_riccati_value(const Eigen::MatrixXd& lambda, double horizon, int steps,
                                              const rdctl::RiccatiWeights& w) {
  const Eigen::Index n = lambda.rows();
  const double dt = horizon / steps;
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd a = id - dt * lambda;
  Eigen::MatrixXd p = w.q_terminal * id;
  for (int k = 0; k < steps; ++k) {
    const Eigen::MatrixXd bp = dt * p;  // B^T P with B = dt I
    const Eigen::MatrixXd gain = (w.r * dt * id + dt * dt * p).ldlt().solve(dt * p * a);
    p = w.q * dt * id + a.transpose() * p * a - a.transpose() * bp.transpose() * gain;
    p = 0.5 * (p + p.transpose()).eval();
  }
  return p;
}

inline rdctl::NNParams random_nn(int state_dim, int neurons, int outputs, rdctl::Activation act, unsigned seed,
                                 double scale = 0.5) {
  rdctl::NNParams p;
  p.activation = act;
  p.inner = Eigen::Map<const Eigen::MatrixXd>(random_vector(neurons * (state_dim + 1), seed, scale).data(), neurons,
                                              state_dim + 1);
  p.bias = random_vector(neurons, seed + 1, scale);
  p.outer = Eigen::Map<const Eigen::MatrixXd>(random_vector(outputs * neurons, seed + 2, 0.3).data(), outputs, neurons);
  return p;
}

inline Eigen::MatrixXd unit_directions(Eigen::Index dim, int count, unsigned seed) {
  Eigen::MatrixXd d(dim, count);
  for (int c = 0; c < count; ++c) d.col(c) = random_vector(static_cast<int>(dim), seed + c).normalized();
  return d;
}

inline std::vector<std::uint64_t> indices(int n, std::uint64_t first = 0) {
  std::vector<std::uint64_t> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = first + i;
  return idx;
}

/// Relative error of the adjoint directional derivatives against central differences
/// along 20 random unit directions.
inline double directional_mismatch(const rdctl::FeedbackPolicy& policy, const rdctl::Simulator& sim,
                                   const Eigen::VectorXd& u0, const rdctl::CostSpec& spec, double h, unsigned seed) {
  const auto idx = indices(3);
  const rdctl::GradientReport exact = rollout_gradient(policy, u0, spec, sim, idx, rdctl::RolloutOptions{2, 1});
  const Eigen::MatrixXd dirs = unit_directions(exact.gradient.size(), 20, seed);
  const rdctl::GradientReport fd =
      finite_difference_gradient(policy, u0, spec, sim, idx, h, &dirs, rdctl::RolloutOptions{2, 1});
  const Eigen::VectorXd projected = dirs.transpose() * exact.gradient;
  return (projected - fd.gradient).norm() / std::max(1e-12, fd.gradient.norm());
}

}  // namespace testing_support
