#pragma once

// Eigenbasis of the negative Laplacian on an interval (0, L), projections onto
// the span of the first N eigenfunctions, fractional powers and the induced
// Sobolev / Hilbert-Schmidt norms. All quantities live in coefficient space:
// a state is the vector of H-inner products u_n = <u, e_n>.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rdctl/error.hpp"

namespace rdctl {

using StateVector = Eigen::VectorXd;

enum class BoundaryCondition { Dirichlet, Neumann };

inline std::string to_string(BoundaryCondition bc) {
  return bc == BoundaryCondition::Dirichlet ? "dirichlet" : "neumann";
}

class SpectralModel {
 public:
  SpectralModel(BoundaryCondition bc, double length, int modes, double shift)
      : bc_(bc), length_(length), shift_(shift) {
    if (!(length > 0.0) || !std::isfinite(length)) {
      throw ConfigError("spectral model: domain length must be positive, got " +
                        std::to_string(length));
    }
    if (modes < 1) {
      throw ConfigError("spectral model: mode count must be >= 1, got " + std::to_string(modes));
    }
    if (!(shift >= 0.0) || !std::isfinite(shift)) {
      throw ConfigError("spectral model: shift must be non-negative");
    }
    eigenvalues_.resize(modes);
    for (int i = 0; i < modes; ++i) {
      const double kappa = wavenumber(i) * std::numbers::pi / length_;
      eigenvalues_[i] = kappa * kappa + shift_;
    }
  }

  BoundaryCondition boundary() const { return bc_; }
  double length() const { return length_; }
  double shift() const { return shift_; }
  int modes() const { return static_cast<int>(eigenvalues_.size()); }
  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
  double eigenvalue(int i) const { return eigenvalues_[i]; }

  /// Integer k of the i-th stored mode: k = i for Neumann (constant mode first),
  /// k = i + 1 for Dirichlet.
  int wavenumber(int i) const { return bc_ == BoundaryCondition::Neumann ? i : i + 1; }

  /// Closed-form L2-normalised eigenfunction e_i(x).
  double basis(int i, double x) const {
    const int k = wavenumber(i);
    const double arg = k * std::numbers::pi * x / length_;
    if (bc_ == BoundaryCondition::Dirichlet) return std::sqrt(2.0 / length_) * std::sin(arg);
    if (k == 0) return 1.0 / std::sqrt(length_);
    return std::sqrt(2.0 / length_) * std::cos(arg);
  }

 private:
  BoundaryCondition bc_;
  double length_;
  double shift_;
  Eigen::VectorXd eigenvalues_;
};

inline SpectralModel build_basis(BoundaryCondition bc, double length, int modes, double shift = 0.0) {
  return SpectralModel(bc, length, modes, shift);
}

/// L2-orthogonal projection onto S_h: truncation or zero padding to model.modes().
inline StateVector project(const Eigen::Ref<const Eigen::VectorXd>& u, const SpectralModel& model) {
  const int n = model.modes();
  StateVector out = StateVector::Zero(n);
  const int keep = std::min<int>(n, static_cast<int>(u.size()));
  out.head(keep) = u.head(keep);
  return out;
}

namespace detail {

// lambda^p with the conventions: zero eigenvalue and p > 0 -> 0; p == 0 -> 1.
inline double eigen_power(double lambda, double p, double coefficient) {
  if (p == 0.0) return 1.0;
  if (lambda > 0.0) return std::pow(lambda, p);
  if (p > 0.0) return 0.0;
  if (coefficient != 0.0) {
    throw SingularOperatorError("negative fractional power applied to a zero eigenvalue mode");
  }
  return 0.0;
}

}  // namespace detail

/// (-A)^{r/2} u, coefficient-wise lambda_n^{r/2} u_n.
inline StateVector fractional_apply(const Eigen::Ref<const Eigen::VectorXd>& u, double r,
                                    const SpectralModel& model) {
  if (u.size() != model.modes()) {
    throw ConfigError("fractional_apply: state length does not match the mode count");
  }
  StateVector out(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    out[i] = detail::eigen_power(model.eigenvalue(static_cast<int>(i)), 0.5 * r, u[i]) * u[i];
  }
  return out;
}

/// ||u||_r = (sum lambda_n^r u_n^2)^{1/2}.
inline double sobolev_norm(const Eigen::Ref<const Eigen::VectorXd>& u, double r,
                           const SpectralModel& model) {
  if (u.size() != model.modes()) {
    throw ConfigError("sobolev_norm: state length does not match the mode count");
  }
  double acc = 0.0;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    acc += detail::eigen_power(model.eigenvalue(static_cast<int>(i)), r, u[i]) * u[i] * u[i];
  }
  return std::sqrt(acc);
}

/// ||u||_{H^1}^2 = ||u||_H^2 + ||u||_1^2.
inline double h1_norm_squared(const Eigen::Ref<const Eigen::VectorXd>& u, const SpectralModel& model) {
  const double h = sobolev_norm(u, 0.0, model);
  const double one = sobolev_norm(u, 1.0, model);
  return h * h + one * one;
}

/// Synthesises sum_n u_n e_n(x_j) at each point.
inline std::vector<double> evaluate_on_grid(const Eigen::Ref<const Eigen::VectorXd>& u,
                                            std::span<const double> points,
                                            const SpectralModel& model) {
  std::vector<double> out(points.size(), 0.0);
  const double tol = 1e-12 * model.length();
  for (std::size_t j = 0; j < points.size(); ++j) {
    const double x = points[j];
    if (!(x >= -tol && x <= model.length() + tol)) {
      throw DomainError("evaluate_on_grid: point " + std::to_string(x) + " outside [0, " +
                        std::to_string(model.length()) + "]");
    }
    double acc = 0.0;
    for (Eigen::Index i = 0; i < u.size() && i < model.modes(); ++i) {
      if (u[i] != 0.0) acc += u[i] * model.basis(static_cast<int>(i), x);
    }
    out[j] = acc;
  }
  return out;
}

/// Truncated ||Phi||_{L^0_{2,r}} for a diagonal operator with per-mode amplitudes sigma_n.
inline double hilbert_schmidt_norm(std::span<const double> per_mode_std, double r,
                                   const SpectralModel& model) {
  double acc = 0.0;
  const std::size_t n = std::min<std::size_t>(per_mode_std.size(), model.modes());
  for (std::size_t i = 0; i < n; ++i) {
    const double s = per_mode_std[i];
    if (s == 0.0) continue;
    acc += detail::eigen_power(model.eigenvalue(static_cast<int>(i)), r, s) * s * s;
  }
  return std::sqrt(acc);
}

/// Uniform grid of `count` points covering [0, L] including both endpoints.
inline std::vector<double> uniform_grid(double length, int count) {
  std::vector<double> x(count);
  if (count == 1) {
    x[0] = 0.5 * length;
    return x;
  }
  for (int j = 0; j < count; ++j) x[j] = length * j / (count - 1);
  return x;
}

}  // namespace rdctl
