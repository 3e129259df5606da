#pragma once

// Linear-quadratic benchmark. For dx = (-Lambda x + g) dt + noise with cost
//   int q |x|^2 + r |g|^2 dt + q_T |x_T|^2
// the value function is x^T P(t) x with, in backward time s = T - t,
//   dP/ds = -Lambda P - P Lambda + q I - P^2 / r,   P(s = 0) = q_T I,
// and the optimal feedback is g = -P(t) x / r.

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "rdctl/error.hpp"
#include "rdctl/spectral.hpp"

namespace rdctl {

struct RiccatiWeights {
  double q = 0.5;           // running state weight
  double r = 0.5;           // control weight
  double q_terminal = 0.0;  // terminal state weight
};

/// Which sign convention the stored operators follow.
///  StandardLqr: P >= 0, feedback g = -P u / r.
///  Printed:     P <= 0, feedback g = +P u (the form P' + P A + A P - I + P^2 = 0, P(T) = -I).
enum class RiccatiConvention { StandardLqr, Printed };

class RiccatiSolution {
 public:
  RiccatiSolution(std::vector<double> time_grid, std::vector<Eigen::VectorXd> diagonal,
                  std::vector<Eigen::MatrixXd> dense, RiccatiWeights weights,
                  RiccatiConvention convention = RiccatiConvention::StandardLqr)
      : time_grid_(std::move(time_grid)),
        diag_(std::move(diagonal)),
        dense_(std::move(dense)),
        weights_(weights),
        convention_(convention) {
    if (time_grid_.size() < 2) throw ConfigError("riccati solution needs at least two grid times");
    for (std::size_t i = 1; i < time_grid_.size(); ++i) {
      if (!(time_grid_[i] > time_grid_[i - 1])) throw ConfigError("riccati time grid must increase strictly");
    }
    const std::size_t n = is_dense() ? dense_.size() : diag_.size();
    if (n != time_grid_.size()) throw ConfigError("riccati solution: one operator per grid time required");
  }

  bool is_dense() const { return !dense_.empty(); }
  int modes() const {
    return static_cast<int>(is_dense() ? dense_.front().rows() : diag_.front().size());
  }
  const std::vector<double>& time_grid() const { return time_grid_; }
  double horizon() const { return time_grid_.back(); }
  const RiccatiWeights& weights() const { return weights_; }
  RiccatiConvention convention() const { return convention_; }
  const std::vector<Eigen::VectorXd>& diagonal_values() const { return diag_; }
  const std::vector<Eigen::MatrixXd>& dense_values() const { return dense_; }

  /// Diagonal of the feedback gain K(t) with g = K(t) u (linear interpolation in t).
  Eigen::VectorXd diagonal_gain(double t) const {
    if (is_dense()) return dense_gain(t).diagonal();
    const auto [j, w] = locate(t);
    Eigen::VectorXd p = w == 0.0 ? diag_[j] : Eigen::VectorXd((1.0 - w) * diag_[j] + w * diag_[j + 1]);
    return to_gain(p);
  }

  Eigen::MatrixXd dense_gain(double t) const {
    if (!is_dense()) return diagonal_gain(t).asDiagonal();
    const auto [j, w] = locate(t);
    Eigen::MatrixXd p = w == 0.0 ? dense_[j] : Eigen::MatrixXd((1.0 - w) * dense_[j] + w * dense_[j + 1]);
    return convention_ == RiccatiConvention::StandardLqr ? Eigen::MatrixXd(-p / weights_.r) : p;
  }

  /// g = K(t) u.
  Eigen::VectorXd apply(double t, const Eigen::Ref<const Eigen::VectorXd>& u) const {
    if (u.size() != modes()) throw ConfigError("riccati feedback: state length does not match the mode count");
    if (is_dense()) return dense_gain(t) * u;
    return diagonal_gain(t).cwiseProduct(u);
  }

  /// Same solution expressed in the other sign convention (gains are unchanged).
  RiccatiSolution with_convention(RiccatiConvention target) const {
    if (target == convention_) return *this;
    const double factor = convention_ == RiccatiConvention::StandardLqr ? -1.0 / weights_.r : -weights_.r;
    std::vector<Eigen::VectorXd> d = diag_;
    std::vector<Eigen::MatrixXd> m = dense_;
    for (auto& v : d) v *= factor;
    for (auto& v : m) v *= factor;
    return RiccatiSolution(time_grid_, std::move(d), std::move(m), weights_, target);
  }

  /// CSV rows "time,mode,gain" for every grid time and mode (diagonal of the gain).
  void write_csv(std::ostream& os) const {
    os << "time,mode,gain\n";
    os.precision(17);
    for (std::size_t j = 0; j < time_grid_.size(); ++j) {
      const Eigen::VectorXd g = is_dense() ? stored_gain_dense(j).diagonal().eval() : to_gain(diag_[j]);
      for (Eigen::Index k = 0; k < g.size(); ++k) os << time_grid_[j] << ',' << k << ',' << g[k] << '\n';
    }
  }

 private:
  Eigen::VectorXd to_gain(const Eigen::VectorXd& p) const {
    return convention_ == RiccatiConvention::StandardLqr ? Eigen::VectorXd(-p / weights_.r) : p;
  }
  Eigen::MatrixXd stored_gain_dense(std::size_t j) const {
    return convention_ == RiccatiConvention::StandardLqr ? Eigen::MatrixXd(-dense_[j] / weights_.r) : dense_[j];
  }

  // Interval index and interpolation weight; grid points (to 1e-9 relative) map to weight 0.
  std::pair<std::size_t, double> locate(double t) const {
    const double t0 = time_grid_.front();
    const double t1 = time_grid_.back();
    const double tol = 1e-12 * std::max(1.0, std::abs(t1));
    if (!(t >= t0 - tol && t <= t1 + tol)) {
      throw DomainError("riccati feedback: t = " + std::to_string(t) + " outside [0, T]");
    }
    const auto it = std::upper_bound(time_grid_.begin(), time_grid_.end(), t);
    std::size_t j = it == time_grid_.begin() ? 0 : static_cast<std::size_t>(it - time_grid_.begin()) - 1;
    if (j >= time_grid_.size() - 1) return {time_grid_.size() - 1, 0.0};
    const double h = time_grid_[j + 1] - time_grid_[j];
    double w = (t - time_grid_[j]) / h;
    if (std::abs(w) < 1e-9) return {j, 0.0};
    if (std::abs(1.0 - w) < 1e-9) return {j + 1, 0.0};
    return {j, std::clamp(w, 0.0, 1.0)};
  }

  std::vector<double> time_grid_;
  std::vector<Eigen::VectorXd> diag_;
  std::vector<Eigen::MatrixXd> dense_;
  RiccatiWeights weights_;
  RiccatiConvention convention_;
};

namespace detail {

inline void check_weights(const RiccatiWeights& w, int steps) {
  if (!(w.q > 0.0) || !(w.r > 0.0)) throw ConfigError("riccati: weights q and r must be positive");
  if (!(w.q_terminal >= 0.0)) throw ConfigError("riccati: terminal weight must be non-negative");
  if (steps < 1) throw ConfigError("riccati: step count must be >= 1");
}

inline std::vector<double> riccati_grid(double horizon, int steps) {
  std::vector<double> grid(steps + 1);
  for (int j = 0; j <= steps; ++j) grid[j] = horizon * j / steps;
  grid[steps] = horizon;
  return grid;
}

// Bound on |f'(p)| along the flow; the returned count keeps h |f'| <= 1, inside the
// real stability interval of RK4.
inline int rk4_substeps(double ds, double lambda_max, double p_bound, double r) {
  const double stiffness = 2.0 * lambda_max + 2.0 * p_bound / r;
  return std::max(1, static_cast<int>(std::ceil(ds * stiffness)));
}

inline constexpr double kRk4Tolerance = 1e-12;
inline constexpr int kRk4MaxSubsteps = 1 << 22;

inline double max_abs(double v) { return std::abs(v); }
inline double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

// Advances y over one grid interval of length ds with `sub` RK4 substeps, doubling the
// count until two successive refinements differ by at most kRk4Tolerance (absolute and
// relative). `sub` carries the accepted count into the next interval.
template <class Y, class F>
Y rk4_interval(const Y& y, double ds, int& sub, F&& f) {
  auto run = [&](int n) {
    const double h = ds / n;
    Y v = y;
    for (int m = 0; m < n; ++m) {
      const Y k1 = f(v);
      const Y k2 = f(Y(v + 0.5 * h * k1));
      const Y k3 = f(Y(v + 0.5 * h * k2));
      const Y k4 = f(Y(v + h * k3));
      v = v + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return v;
  };
  Y coarse = run(sub);
  while (true) {
    Y fine = run(2 * sub);
    const double diff = max_abs(Y(fine - coarse));
    if (!std::isfinite(diff)) return fine;
    if (diff <= kRk4Tolerance * std::max(1.0, max_abs(fine)) || 2 * sub >= kRk4MaxSubsteps) return fine;
    sub *= 2;
    coarse = std::move(fine);
  }
}

}  // namespace detail

/// Per-mode scalar Riccati equations (the eigenbasis keeps P diagonal), classical RK4
/// backward from t = T on `steps` uniform intervals. Each interval is subdivided per mode
/// until successive RK4 refinements agree to 1e-12; results are stored on the grid only.
inline RiccatiSolution solve_riccati_diagonal(const SpectralModel& model, double horizon, int steps,
                                              const RiccatiWeights& weights) {
  detail::check_weights(weights, steps);
  if (!(horizon > 0.0)) throw ConfigError("riccati: horizon must be positive");
  const int n = model.modes();
  const double ds = horizon / steps;
  std::vector<Eigen::VectorXd> p(steps + 1, Eigen::VectorXd(n));
  const double q = weights.q;
  const double r = weights.r;
  for (int k = 0; k < n; ++k) {
    const double lambda = model.eigenvalue(k);
    const double equilibrium = r * (-lambda + std::sqrt(lambda * lambda + q / r));
    const int base = detail::rk4_substeps(ds, lambda, std::max(weights.q_terminal, equilibrium), r);
    int sub = base;
    auto f = [&](double v) { return -2.0 * lambda * v + q - v * v / r; };
    double v = weights.q_terminal;
    p[steps][k] = v;
    for (int i = 1; i <= steps; ++i) {
      v = detail::rk4_interval(v, ds, sub, f);
      sub = std::max(base, sub / 2);
      if (!std::isfinite(v)) {
        throw NumericError("riccati integration blew up in mode " + std::to_string(k));
      }
      p[steps - i][k] = v;
    }
  }
  return RiccatiSolution(detail::riccati_grid(horizon, steps), std::move(p), {}, weights);
}

/// Matrix-valued RK4 for a general symmetric positive semi-definite system matrix
/// Lambda (dx = -Lambda x + g). Oracle path, intended for small N.
inline RiccatiSolution solve_riccati_dense(const Eigen::MatrixXd& lambda, double horizon, int steps,
                                           const RiccatiWeights& weights,
                                           const Eigen::MatrixXd* terminal = nullptr) {
  detail::check_weights(weights, steps);
  const Eigen::Index n = lambda.rows();
  if (lambda.cols() != n || n < 1) throw ConfigError("riccati dense: system matrix must be square");
  if (n > 8) throw ConfigError("riccati dense: oracle path supports at most 8 modes");
  if ((lambda - lambda.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, lambda.cwiseAbs().maxCoeff())) {
    throw ConfigError("riccati dense: system matrix must be symmetric");
  }
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd p_terminal = terminal ? *terminal : Eigen::MatrixXd(weights.q_terminal * id);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(lambda);
  const double lambda_max = es.eigenvalues().cwiseAbs().maxCoeff();
  const double p_bound = std::max(p_terminal.norm(), std::sqrt(weights.q * weights.r));
  const double ds = horizon / steps;
  const int base = detail::rk4_substeps(ds, lambda_max, p_bound, weights.r);
  int sub = base;
  const double q = weights.q;
  const double r = weights.r;
  auto f = [&](const Eigen::MatrixXd& p) -> Eigen::MatrixXd {
    return -lambda * p - p * lambda + q * id - p * p / r;
  };
  std::vector<Eigen::MatrixXd> out(steps + 1);
  Eigen::MatrixXd p = p_terminal;
  out[steps] = p;
  for (int i = 1; i <= steps; ++i) {
    p = detail::rk4_interval(p, ds, sub, f);
    p = 0.5 * (p + p.transpose()).eval();
    sub = std::max(base, sub / 2);
    if (!p.allFinite()) {
      Eigen::Index row = 0;
      Eigen::Index col = 0;
      p.cwiseAbs().maxCoeff(&row, &col);
      throw NumericError("riccati dense integration blew up in mode " + std::to_string(row));
    }
    out[steps - i] = p;
  }
  return RiccatiSolution(detail::riccati_grid(horizon, steps), {}, std::move(out), weights);
}

inline RiccatiSolution solve_riccati_dense(const SpectralModel& model, double horizon, int steps,
                                           const RiccatiWeights& weights) {
  const Eigen::MatrixXd lambda = model.eigenvalues().asDiagonal();
  return solve_riccati_dense(lambda, horizon, steps, weights);
}

/// Feedback gain at time t (diagonal fast path): g = riccati_feedback(sol, t) .* u.
inline Eigen::VectorXd riccati_feedback(const RiccatiSolution& solution, double t) {
  return solution.diagonal_gain(t);
}

}  // namespace rdctl
