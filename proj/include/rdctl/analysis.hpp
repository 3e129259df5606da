#pragma once

// Sweeps that measure approximation and discretisation errors against a varying
// resolution and fit a power law to them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/QR>

#include "rdctl/cost.hpp"
#include "rdctl/dynamics.hpp"
#include "rdctl/error.hpp"
#include "rdctl/policies.hpp"
#include "rdctl/rbf.hpp"
#include "rdctl/rng.hpp"

namespace rdctl {

/// Fits log(error) = c + rate * log(axis) over the strictly positive entries.
struct PowerFit {
  double rate = 0.0;
  double intercept = 0.0;
  double residual = 0.0;  // root mean square log-residual
  int points = 0;
};

inline std::optional<PowerFit> fit_power_law(const std::vector<double>& axis, const std::vector<double>& error) {
  std::vector<double> x, y;
  for (std::size_t i = 0; i < axis.size() && i < error.size(); ++i) {
    if (axis[i] > 0.0 && error[i] > 0.0 && std::isfinite(error[i])) {
      x.push_back(std::log(axis[i]));
      y.push_back(std::log(error[i]));
    }
  }
  if (x.size() < 2) return std::nullopt;
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) return std::nullopt;
  PowerFit f;
  f.rate = sxy / sxx;
  f.intercept = my - f.rate * mx;
  double ss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (f.intercept + f.rate * x[i]);
    ss += r * r;
  }
  f.residual = std::sqrt(ss / n);
  f.points = static_cast<int>(x.size());
  return f;
}

struct SweepReport {
  std::string name;
  std::string axis;
  std::vector<double> values;
  std::vector<double> errors;
  std::vector<double> std_errors;
  std::vector<std::pair<std::string, std::vector<double>>> extra;  // additional columns
  std::optional<PowerFit> fit;

  static constexpr double kInconclusiveResidual = 0.5;

  void refit() { fit = fit_power_law(values, errors); }
  bool inconclusive() const { return !fit || fit->residual > kInconclusiveResidual; }

  /// Header "<name>:<axis>,error,std_error[,extra...]" followed by one row per axis value.
  void write_csv(std::ostream& os) const {
    os << name << ':' << axis << ",error,std_error";
    for (const auto& [col, _] : extra) os << ',' << col;
    os << '\n';
    os.precision(17);
    for (std::size_t i = 0; i < values.size(); ++i) {
      os << values[i] << ',' << errors[i] << ',' << (i < std_errors.size() ? std_errors[i] : 0.0);
      for (const auto& [_, col] : extra) os << ',' << col[i];
      os << '\n';
    }
  }

  /// One line "rate,residual,points,inconclusive"; the fields are empty without a fit.
  void write_fit(std::ostream& os) const {
    os << "sweep,rate,residual,points,inconclusive\n";
    os.precision(17);
    os << name << ',';
    if (fit) os << fit->rate << ',' << fit->residual << ',' << fit->points;
    else os << ",,0";
    os << ',' << (inconclusive() ? 1 : 0) << '\n';
  }
};

/// sup_error(G, G^{N'}) over the given target mode counts N'.
inline SweepReport finitely_based_decay(const FeedbackPolicy& target, int state_dim, const std::vector<int>& mode_counts,
                                        double horizon, double radius, int samples, std::uint64_t seed) {
  SweepReport rep{"finitely_based_decay", "modes", {}, {}, {}, {}, {}};
  for (int m : mode_counts) {
    rep.values.push_back(m);
    rep.errors.push_back(sup_error(target, finitely_based(target, m), state_dim, 0.0, horizon, radius, samples, seed));
    rep.std_errors.push_back(0.0);
  }
  rep.refit();
  return rep;
}

/// Builds an ansatz member of capacity m approximating a target.
using CapacityFitter = std::function<FeedbackPolicy(int capacity)>;

/// Optional realised cost of a fitted member (for the cost-gap column).
using CostProbe = std::function<CostEstimate(const FeedbackPolicy&)>;

/// For each capacity m, fits a member and records eps_m = sup_error(target, member); with a
/// cost probe also records the cost and its gap to `benchmark_cost`.
inline SweepReport ansatz_capacity_sweep(const std::vector<int>& capacities, const CapacityFitter& fitter,
                                         const FeedbackPolicy& target, int state_dim, double horizon, double radius,
                                         int samples, std::uint64_t seed, const CostProbe& probe = {},
                                         double benchmark_cost = 0.0) {
  SweepReport rep{"ansatz_capacity", "capacity", {}, {}, {}, {}, {}};
  std::vector<double> cost, cost_se, gap;
  for (int m : capacities) {
    const FeedbackPolicy member = fitter(m);
    rep.values.push_back(m);
    rep.errors.push_back(sup_error(target, member, state_dim, 0.0, horizon, radius, samples, seed));
    rep.std_errors.push_back(0.0);
    if (probe) {
      const CostEstimate c = probe(member);
      cost.push_back(c.mean);
      cost_se.push_back(c.std_error);
      gap.push_back(c.mean - benchmark_cost);
    }
  }
  if (probe) {
    rep.extra.emplace_back("cost", cost);
    rep.extra.emplace_back("cost_std_error", cost_se);
    rep.extra.emplace_back("cost_gap", gap);
  }
  rep.refit();
  return rep;
}

/// RBF interpolant of the target on m quasi-uniform nodes in [0,T] x B(0,R) of R^dim.
inline CapacityFitter rbf_capacity_fitter(FeedbackPolicy target, int state_dim, int dim, double horizon,
                                          double radius, double kappa, std::uint64_t seed = 0) {
  return [=](int m) {
    const NodeSet set = quasi_uniform_nodes(m, horizon, radius, dim, std::numeric_limits<double>::infinity(), seed);
    Eigen::MatrixXd values(m, state_dim);
    for (int i = 0; i < m; ++i) {
      Eigen::VectorXd u = Eigen::VectorXd::Zero(state_dim);
      const int keep = std::min(dim, state_dim);
      u.head(keep) = set.nodes.row(i).segment(1, keep).transpose();
      values.row(i) = target.eval(set.nodes(i, 0), u).transpose();
    }
    return FeedbackPolicy::rbf(fit_rbf_interpolant(set.nodes, values, kappa));
  };
}

/// One-layer network with m neurons: inner weights drawn Glorot-uniform, outer weights by
/// least squares against the target on `fit_samples` points of [0,T] x B(0,R).
inline CapacityFitter nn_random_feature_fitter(FeedbackPolicy target, int state_dim, double horizon, double radius,
                                               Activation activation, int fit_samples, std::uint64_t seed = 0) {
  return [=](int m) {
    NNParams p;
    p.activation = activation;
    p.inner.resize(m, state_dim + 1);
    auto engine = make_engine(seed, streams::kInit, static_cast<std::uint64_t>(m));
    const double limit = std::sqrt(6.0 / (state_dim + 1 + m));
    std::uniform_real_distribution<double> uniform(-limit, limit);
    for (Eigen::Index j = 0; j < p.inner.cols(); ++j) {
      for (Eigen::Index i = 0; i < p.inner.rows(); ++i) p.inner(i, j) = uniform(engine);
    }
    std::uniform_real_distribution<double> bias(-1.0, 1.0);
    p.bias.resize(m);
    for (int i = 0; i < m; ++i) p.bias[i] = bias(engine);
    std::uniform_real_distribution<double> time(0.0, horizon);
    Eigen::MatrixXd features(fit_samples, m);
    Eigen::MatrixXd targets(fit_samples, state_dim);
    for (int s = 0; s < fit_samples; ++s) {
      const double t = time(engine);
      const Eigen::VectorXd u = sample_ball(engine, state_dim, radius);
      features.row(s) = p.preactivation(t, u)
                            .unaryExpr([a = activation](double z) { return activate(a, z); })
                            .transpose();
      targets.row(s) = target.eval(t, u).transpose();
    }
    p.outer = features.completeOrthogonalDecomposition().solve(targets).transpose();
    return FeedbackPolicy::neural(std::move(p));
  };
}

enum class RefinementReference { ExactLinear, FineGrid };

/// Simulator identical to `base` except for the step count.
inline Simulator with_steps(const Simulator& base, int steps) {
  SdeConfig cfg = base.config();
  cfg.steps = steps;
  return Simulator(base.model(), base.noise(), cfg);
}

/// Strong terminal error sqrt(E ||u_T^{dt} - u_T^{ref}||^2) for each step count. Step counts
/// must be nested by factors of two. ExactLinear needs a zero policy, a linear or zero
/// nonlinearity and silent noise; FineGrid uses four times the largest step count and
/// sums its increments onto the coarse grids.
inline SweepReport timestep_refinement(const Simulator& base, const FeedbackPolicy& policy, const StateVector& u0,
                                       std::vector<int> step_counts, int samples, RefinementReference reference) {
  if (step_counts.empty() || samples < 1) throw ConfigError("timestep_refinement: need step counts and samples");
  std::sort(step_counts.begin(), step_counts.end());
  for (std::size_t i = 1; i < step_counts.size(); ++i) {
    if (step_counts[i] != 2 * step_counts[i - 1]) throw ConfigError("timestep_refinement: step counts must double");
  }
  const int fine_steps = 4 * step_counts.back();
  const double horizon = base.config().horizon;
  Eigen::VectorXd exact;
  if (reference == RefinementReference::ExactLinear) {
    if (!std::holds_alternative<ZeroPolicy>(policy.base()) || !policy.wrappers().empty()) {
      throw UnsupportedPolicyError("exact reference needs the zero policy");
    }
    const auto& nl = base.config().nonlinearity;
    if (!is_spectral_nonlinearity(nl)) throw UnsupportedPolicyError("exact reference needs a linear nonlinearity");
    for (double s : base.noise().per_mode_std()) {
      if (s != 0.0) throw ConfigError("exact reference needs zero noise");
    }
    const double c = std::holds_alternative<LinearNonlinearity>(nl) ? std::get<LinearNonlinearity>(nl).c : 0.0;
    exact = ((c - base.model().eigenvalues().array()) * horizon).exp() * u0.array();
  }
  const Simulator fine = with_steps(base, fine_steps);
  std::vector<Simulator> coarse;
  coarse.reserve(step_counts.size());
  for (int n : step_counts) coarse.push_back(with_steps(base, n));
  std::vector<std::vector<double>> sq(step_counts.size(), std::vector<double>(samples, 0.0));
  for (int s = 0; s < samples; ++s) {
    const Eigen::MatrixXd dw = fine.sample_noise_increments(static_cast<std::uint64_t>(s));
    Eigen::VectorXd ref = exact;
    if (reference == RefinementReference::FineGrid) ref = fine.simulate_with_noise(policy, u0, dw).states.back();
    for (std::size_t i = 0; i < step_counts.size(); ++i) {
      const Eigen::MatrixXd cdw = coarsen_increments(dw, fine_steps / step_counts[i]);
      sq[i][s] = (coarse[i].simulate_with_noise(policy, u0, cdw).states.back() - ref).squaredNorm();
    }
  }
  SweepReport rep{"timestep_refinement", "dt", {}, {}, {}, {}, {}};
  for (std::size_t i = 0; i < step_counts.size(); ++i) {
    const CostEstimate e = summarize(sq[i]);
    const double rms = std::sqrt(e.mean);
    rep.values.push_back(horizon / step_counts[i]);
    rep.errors.push_back(rms);
    rep.std_errors.push_back(rms > 0.0 ? e.std_error / (2.0 * rms) : 0.0);
  }
  rep.refit();
  return rep;
}

}  // namespace rdctl
