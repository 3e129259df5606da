#pragma once

// Galerkin-truncated controlled SPDE
//   du = [A_h u + P_h F(u) + P_h G(t, u)] dt + P_h B dW
// advanced with the linear-implicit Euler scheme, diagonal in the eigenbasis:
//   u_{n+1} = (u_n + dt (F(u_n) + g_n) + dW_n) / (1 + dt lambda).

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "rdctl/error.hpp"
#include "rdctl/noise.hpp"
#include "rdctl/spectral.hpp"

namespace rdctl {

struct ZeroNonlinearity {};

struct LinearNonlinearity {
  double c = 0.0;
};

/// f(u) = gamma u (u - 1)(a - u).
struct NagumoNonlinearity {
  double gamma = 1.0;
  double a = 0.5;
};

struct CustomNonlinearity {
  std::function<double(double)> f;
  std::function<double(double)> derivative;  // optional; required for gradients
};

using Nonlinearity =
    std::variant<ZeroNonlinearity, LinearNonlinearity, NagumoNonlinearity, CustomNonlinearity>;

inline double nonlinearity_value(const Nonlinearity& nl, double u) {
  return std::visit(
      [u](const auto& f) -> double {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, ZeroNonlinearity>) {
          return 0.0;
        } else if constexpr (std::is_same_v<T, LinearNonlinearity>) {
          return f.c * u;
        } else if constexpr (std::is_same_v<T, NagumoNonlinearity>) {
          return f.gamma * u * (u - 1.0) * (f.a - u);
        } else {
          return f.f(u);
        }
      },
      nl);
}

inline double nonlinearity_derivative(const Nonlinearity& nl, double u) {
  return std::visit(
      [u](const auto& f) -> double {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, ZeroNonlinearity>) {
          return 0.0;
        } else if constexpr (std::is_same_v<T, LinearNonlinearity>) {
          return f.c;
        } else if constexpr (std::is_same_v<T, NagumoNonlinearity>) {
          return f.gamma * (-3.0 * u * u + 2.0 * (1.0 + f.a) * u - f.a);
        } else {
          if (!f.derivative) throw UnsupportedPolicyError("custom nonlinearity has no derivative");
          return f.derivative(u);
        }
      },
      nl);
}

/// True when F acts coefficient-wise (no collocation needed).
inline bool is_spectral_nonlinearity(const Nonlinearity& nl) {
  return std::holds_alternative<ZeroNonlinearity>(nl) || std::holds_alternative<LinearNonlinearity>(nl);
}

struct SdeConfig {
  double horizon = 20.0;
  int steps = 2000;
  Nonlinearity nonlinearity = ZeroNonlinearity{};
  int collocation_points = 0;  // 0 selects 4 * modes
  std::uint64_t seed = 0;

  double dt() const { return horizon / steps; }
};

/// Uniform collocation grid on [0, L] with trapezoid weights and the basis sampled on it.
struct Collocation {
  std::vector<double> points;
  Eigen::VectorXd weights;
  Eigen::MatrixXd basis;  // points x modes

  Collocation() = default;
  Collocation(const SpectralModel& model, int count) : points(uniform_grid(model.length(), count)) {
    if (count < 2) throw ConfigError("collocation grid needs at least two points");
    const double h = model.length() / (count - 1);
    weights = Eigen::VectorXd::Constant(count, h);
    weights[0] = weights[count - 1] = 0.5 * h;
    basis.resize(count, model.modes());
    for (int j = 0; j < count; ++j) {
      for (int i = 0; i < model.modes(); ++i) basis(j, i) = model.basis(i, points[j]);
    }
  }

  int size() const { return static_cast<int>(points.size()); }
};

struct Trajectory {
  std::vector<double> times;
  std::vector<StateVector> states;
  std::vector<StateVector> controls;
  Eigen::MatrixXd noise_increments;  // steps x modes
};

/// Fourier coefficients of the indicator of [a, b], computed in closed form.
inline StateVector initial_profile_indicator(double a, double b, const SpectralModel& model) {
  if (!(a < b) || a < 0.0 || b > model.length()) {
    throw ConfigError("indicator profile needs 0 <= a < b <= L");
  }
  const double L = model.length();
  const double c = std::sqrt(2.0 / L);
  StateVector u(model.modes());
  for (int i = 0; i < model.modes(); ++i) {
    const int k = model.wavenumber(i);
    if (k == 0) {
      u[i] = (b - a) / std::sqrt(L);
      continue;
    }
    const double w = k * std::numbers::pi / L;
    if (model.boundary() == BoundaryCondition::Neumann) {
      u[i] = c * (std::sin(w * b) - std::sin(w * a)) / w;
    } else {
      u[i] = c * (std::cos(w * a) - std::cos(w * b)) / w;
    }
  }
  return u;
}

/// Sums consecutive groups of `factor` rows: increments of a coarser grid on the same path.
inline Eigen::MatrixXd coarsen_increments(const Eigen::MatrixXd& fine, int factor) {
  if (factor < 1 || fine.rows() % factor != 0) {
    throw ConfigError("coarsen_increments: row count must be divisible by the factor");
  }
  Eigen::MatrixXd coarse = Eigen::MatrixXd::Zero(fine.rows() / factor, fine.cols());
  for (Eigen::Index r = 0; r < fine.rows(); ++r) coarse.row(r / factor) += fine.row(r);
  return coarse;
}

template <class P>
concept PathPolicy = requires(const P& p, double t, const StateVector& u) {
  { p.eval(t, u) } -> std::convertible_to<StateVector>;
};

/// Immutable bundle of spatial model, noise and time grid with the derived operators
/// precomputed. Safe to share across threads.
class Simulator {
 public:
  Simulator(SpectralModel model, NoiseModel noise, SdeConfig cfg)
      : model_(std::move(model)), noise_(std::move(noise)), cfg_(std::move(cfg)) {
    if (cfg_.steps < 1) throw ConfigError("sde config: steps must be >= 1");
    if (!(cfg_.horizon > 0.0)) throw ConfigError("sde config: horizon must be positive");
    if (noise_.modes() != model_.modes()) throw ConfigError("noise model and spectral model disagree on modes");
    const int m = cfg_.collocation_points > 0 ? cfg_.collocation_points : 4 * model_.modes();
    if (!is_spectral_nonlinearity(cfg_.nonlinearity) && m < 2 * model_.modes()) {
      throw ConfigError("sde config: collocation_points must be >= 2 * modes for pointwise nonlinearities");
    }
    grid_ = std::make_shared<const Collocation>(model_, std::max(m, 2));
    inv_diag_ = (1.0 + cfg_.dt() * model_.eigenvalues().array()).inverse().matrix();
  }

  const SpectralModel& model() const { return model_; }
  const NoiseModel& noise() const { return noise_; }
  const SdeConfig& config() const { return cfg_; }
  const Collocation& grid() const { return *grid_; }
  int modes() const { return model_.modes(); }
  int steps() const { return cfg_.steps; }
  double dt() const { return cfg_.dt(); }
  double time(int n) const { return n * cfg_.dt(); }
  /// (1 + dt lambda)^{-1} per mode.
  const Eigen::VectorXd& inverse_diagonal() const { return inv_diag_; }

  /// n_t x N_h array of increments for one sample; a pure function of (seed, sample_index).
  Eigen::MatrixXd sample_noise_increments(std::uint64_t sample_index) const {
    Eigen::MatrixXd dw(cfg_.steps, modes());
    NoiseStream stream(cfg_.seed, sample_index);
    for (int n = 0; n < cfg_.steps; ++n) stream.next(noise_, dt(), dw.row(n));
    return dw;
  }

  /// Pseudo-spectral Nemytskii operator P_h F(u).
  StateVector nemytskii(const Eigen::Ref<const Eigen::VectorXd>& u) const {
    const auto& nl = cfg_.nonlinearity;
    if (std::holds_alternative<ZeroNonlinearity>(nl)) return StateVector::Zero(u.size());
    if (const auto* lin = std::get_if<LinearNonlinearity>(&nl)) return lin->c * u;
    Eigen::VectorXd field = grid_->basis * u;
    for (Eigen::Index j = 0; j < field.size(); ++j) {
      field[j] = nonlinearity_value(nl, field[j]) * grid_->weights[j];
    }
    return grid_->basis.transpose() * field;
  }

  /// Column-wise Nemytskii operator for a batch of states (modes x batch).
  Eigen::MatrixXd nemytskii_batch(const Eigen::MatrixXd& states) const {
    const auto& nl = cfg_.nonlinearity;
    if (std::holds_alternative<ZeroNonlinearity>(nl)) return Eigen::MatrixXd::Zero(states.rows(), states.cols());
    if (const auto* lin = std::get_if<LinearNonlinearity>(&nl)) return lin->c * states;
    Eigen::MatrixXd field = grid_->basis * states;
    for (Eigen::Index b = 0; b < field.cols(); ++b) {
      for (Eigen::Index j = 0; j < field.rows(); ++j) {
        field(j, b) = nonlinearity_value(nl, field(j, b)) * grid_->weights[j];
      }
    }
    return grid_->basis.transpose() * field;
  }

  /// J_F(u)^T v where J_F is the Jacobian of the discrete Nemytskii operator.
  StateVector nemytskii_adjoint(const Eigen::Ref<const Eigen::VectorXd>& u,
                                const Eigen::Ref<const Eigen::VectorXd>& v) const {
    const auto& nl = cfg_.nonlinearity;
    if (std::holds_alternative<ZeroNonlinearity>(nl)) return StateVector::Zero(u.size());
    if (const auto* lin = std::get_if<LinearNonlinearity>(&nl)) return lin->c * v;
    const Eigen::VectorXd field = grid_->basis * u;
    Eigen::VectorXd pv = grid_->basis * v;
    for (Eigen::Index j = 0; j < pv.size(); ++j) {
      pv[j] *= nonlinearity_derivative(nl, field[j]) * grid_->weights[j];
    }
    return grid_->basis.transpose() * pv;
  }

  /// Column-wise J_F(u_b)^T v_b.
  Eigen::MatrixXd nemytskii_adjoint_batch(const Eigen::MatrixXd& states, const Eigen::MatrixXd& v) const {
    const auto& nl = cfg_.nonlinearity;
    if (std::holds_alternative<ZeroNonlinearity>(nl)) return Eigen::MatrixXd::Zero(v.rows(), v.cols());
    if (const auto* lin = std::get_if<LinearNonlinearity>(&nl)) return lin->c * v;
    const Eigen::MatrixXd field = grid_->basis * states;
    Eigen::MatrixXd pv = grid_->basis * v;
    for (Eigen::Index b = 0; b < pv.cols(); ++b) {
      for (Eigen::Index j = 0; j < pv.rows(); ++j) {
        pv(j, b) *= nonlinearity_derivative(nl, field(j, b)) * grid_->weights[j];
      }
    }
    return grid_->basis.transpose() * pv;
  }

  /// One linear-implicit Euler step.
  StateVector step(const Eigen::Ref<const Eigen::VectorXd>& u, double /*t*/,
                   const Eigen::Ref<const Eigen::VectorXd>& g,
                   const Eigen::Ref<const Eigen::VectorXd>& dw) const {
    if (u.size() != modes() || g.size() != modes() || dw.size() != modes()) {
      throw ConfigError("step: vector lengths must equal the mode count");
    }
    if (!u.allFinite() || !g.allFinite() || !dw.allFinite()) {
      throw NumericError("step: non-finite input");
    }
    StateVector rhs = u + dt() * (nemytskii(u) + g) + dw;
    return rhs.cwiseProduct(inv_diag_);
  }

  /// Rollout with given increments (steps x modes); controls are evaluated before each step.
  template <PathPolicy Policy>
  Trajectory simulate_with_noise(const Policy& policy, const StateVector& u0,
                                 Eigen::MatrixXd increments) const {
    if (u0.size() != modes()) throw ConfigError("initial state length does not match the mode count");
    if (increments.rows() != steps() || increments.cols() != modes()) {
      throw ConfigError("noise increments have the wrong shape");
    }
    Trajectory tr;
    tr.times.resize(steps() + 1);
    tr.states.reserve(steps() + 1);
    tr.controls.reserve(steps());
    tr.states.push_back(u0);
    for (int n = 0; n < steps(); ++n) {
      const double t = time(n);
      tr.times[n] = t;
      StateVector g;
      try {
        g = policy.eval(t, tr.states.back());
      } catch (const NumericError& e) {
        throw NumericError("policy evaluation failed at step " + std::to_string(n) + ": " + e.what());
      } catch (const Error& e) {
        throw Error("policy evaluation failed at step " + std::to_string(n) + ": " + e.what());
      }
      if (g.size() != modes()) throw ConfigError("policy output length does not match the mode count");
      if (!g.allFinite()) {
        throw NumericError("policy returned a non-finite control at step " + std::to_string(n));
      }
      tr.states.push_back(step(tr.states.back(), t, g, increments.row(n).transpose()));
      tr.controls.push_back(std::move(g));
    }
    tr.times[steps()] = cfg_.horizon;
    tr.noise_increments = std::move(increments);
    return tr;
  }

  template <PathPolicy Policy>
  Trajectory simulate_path(const Policy& policy, const StateVector& u0, std::uint64_t sample_index) const {
    return simulate_with_noise(policy, u0, sample_noise_increments(sample_index));
  }

 private:
  SpectralModel model_;
  NoiseModel noise_;
  SdeConfig cfg_;
  std::shared_ptr<const Collocation> grid_;
  Eigen::VectorXd inv_diag_;
};

}  // namespace rdctl
