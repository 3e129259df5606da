#pragma once

// Gaussian radial basis function interpolation on [0, T] x B(0, R) in R^{1 + d}:
//   s(x) = sum_i alpha_i Phi(x, x_i),   Phi(x, y) = exp(-kappa |x - y|^2),
// with vector-valued outputs sharing one node set (alpha is a K x m matrix).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "rdctl/error.hpp"
#include "rdctl/rng.hpp"

namespace rdctl {

inline double gaussian_kernel(double kappa, const Eigen::Ref<const Eigen::VectorXd>& x,
                              const Eigen::Ref<const Eigen::VectorXd>& y) {
  return std::exp(-kappa * (x - y).squaredNorm());
}

struct RbfData {
  double kappa = 1.0;
  Eigen::MatrixXd nodes;    // K x (1 + d); column 0 is time
  Eigen::MatrixXd weights;  // K x outputs

  int node_count() const { return static_cast<int>(nodes.rows()); }
  int ambient_dim() const { return static_cast<int>(nodes.cols()) - 1; }
  int outputs() const { return static_cast<int>(weights.cols()); }

  /// Phi(x, x_i) for every node.
  Eigen::VectorXd kernel_row(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    Eigen::VectorXd k(nodes.rows());
    for (Eigen::Index i = 0; i < nodes.rows(); ++i) {
      k[i] = std::exp(-kappa * (nodes.row(i).transpose() - x).squaredNorm());
    }
    return k;
  }

  Eigen::VectorXd evaluate(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return weights.transpose() * kernel_row(x);
  }
};

inline Eigen::MatrixXd kernel_matrix(double kappa, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd k(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      k(i, j) = std::exp(-kappa * (a.row(i) - b.row(j)).squaredNorm());
    }
  }
  return k;
}

/// q_X = half the minimal pairwise distance; +infinity for fewer than two nodes.
inline double separation_distance(const Eigen::MatrixXd& nodes) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < nodes.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < nodes.rows(); ++j) {
      best = std::min(best, (nodes.row(i) - nodes.row(j)).squaredNorm());
    }
  }
  return std::isinf(best) ? best : 0.5 * std::sqrt(best);
}

/// max over sample points of the distance to the nearest node (estimate of h_{X,O}).
inline double fill_distance(const Eigen::MatrixXd& nodes, const Eigen::MatrixXd& samples) {
  double worst = 0.0;
  for (Eigen::Index s = 0; s < samples.rows(); ++s) {
    double nearest = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < nodes.rows(); ++i) {
      nearest = std::min(nearest, (nodes.row(i) - samples.row(s)).squaredNorm());
    }
    worst = std::max(worst, nearest);
  }
  return std::sqrt(worst);
}

/// Solves K alpha = values by Cholesky, adding diagonal jitter 1e-10, 1e-9, ..., 1e-6
/// when the plain system does not factorise.
inline RbfData fit_rbf_interpolant(const Eigen::MatrixXd& nodes, const Eigen::MatrixXd& values, double kappa) {
  if (!(kappa > 0.0)) throw ConfigError("rbf: kappa must be positive");
  if (nodes.rows() < 1) throw ConfigError("rbf: at least one node required");
  if (values.rows() != nodes.rows()) throw ConfigError("rbf: one value row per node required");
  const double q = separation_distance(nodes);
  if (!(q > 0.0)) throw ConfigError("rbf: nodes must be pairwise distinct");
  const Eigen::MatrixXd k = kernel_matrix(kappa, nodes, nodes);
  double jitter = 0.0;
  while (true) {
    Eigen::MatrixXd kj = k;
    kj.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(kj);
    if (llt.info() == Eigen::Success) {
      Eigen::MatrixXd alpha = llt.solve(values);
      if (alpha.allFinite()) return RbfData{kappa, nodes, std::move(alpha)};
    }
    if (jitter >= 1e-6) break;
    jitter = jitter == 0.0 ? 1e-10 : jitter * 10.0;
  }
  throw IllConditionedKernelError(
      "rbf: kernel system not factorisable at maximal jitter 1e-6 (separation q_X = " + std::to_string(q) + ")",
      q);
}

/// Native-space norm sqrt(sum_j alpha_j^T K alpha_j) (Frobenius over output coordinates).
inline double native_norm(const RbfData& rbf) {
  if (rbf.node_count() == 0) return 0.0;
  const Eigen::MatrixXd k = kernel_matrix(rbf.kappa, rbf.nodes, rbf.nodes);
  const double sq = (rbf.weights.transpose() * k * rbf.weights).trace();
  return std::sqrt(std::max(0.0, sq));
}

/// Certified Lipschitz constant in the form 2 kappa ||s||^2.
inline double lipschitz_bound_rbf(const RbfData& rbf) {
  const double n = native_norm(rbf);
  return 2.0 * rbf.kappa * n * n;
}

/// Sharper constant sqrt(2 kappa) ||s|| from ||Phi(., x) - Phi(., y)||^2 = 2(1 - e^{-kappa |x-y|^2}).
inline double lipschitz_bound_rbf_sharp(const RbfData& rbf) {
  return std::sqrt(2.0 * rbf.kappa) * native_norm(rbf);
}

/// Uniform sample from the ball of radius R in R^d.
template <class Engine>
Eigen::VectorXd sample_ball(Engine& engine, int dim, double radius) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Eigen::VectorXd z(dim);
  double n2 = 0.0;
  do {
    for (int i = 0; i < dim; ++i) z[i] = normal(engine);
    n2 = z.squaredNorm();
  } while (n2 == 0.0);
  const double rho = radius * std::pow(uniform(engine), 1.0 / dim);
  return z * (rho / std::sqrt(n2));
}

struct NodeSet {
  Eigen::MatrixXd nodes;       // K x (1 + d)
  double fill_distance = 0.0;  // measured h_{X,O}
  double separation = std::numeric_limits<double>::infinity();  // q_X
  double quasi_uniformity = std::numeric_limits<double>::quiet_NaN();  // c_qu = h / q
  double enclosing_radius = 0.0;  // R' of the smallest ball around O centred at (T/2, 0)
  bool meets_target = true;

  /// Right-hand side of h_{X,O} <= 2 R' c_qu K^{-1/D}.
  double fill_bound() const {
    const double dim = static_cast<double>(nodes.cols());
    return 2.0 * enclosing_radius * quasi_uniformity * std::pow(static_cast<double>(nodes.rows()), -1.0 / dim);
  }
};

/// Dense point cloud over O = [0, T] x B(0, R): uniform interior samples plus samples on
/// the two time faces and the lateral boundary, where the fill distance is attained.
inline Eigen::MatrixXd sample_domain(double horizon, double radius, int dim, int count, std::uint64_t seed) {
  auto engine = make_engine(seed, streams::kFillSampling, 0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Eigen::MatrixXd pts(count, 1 + dim);
  for (int s = 0; s < count; ++s) {
    const int kind = s % 4;
    double t = horizon * uniform(engine);
    Eigen::VectorXd x = sample_ball(engine, dim, radius);
    if (kind == 1) t = (s / 4) % 2 == 0 ? 0.0 : horizon;
    if (kind == 2 && x.norm() > 0.0) x *= radius / x.norm();
    if (kind == 3) {
      t = (s / 4) % 2 == 0 ? 0.0 : horizon;
      if (x.norm() > 0.0) x *= radius / x.norm();
    }
    pts(s, 0) = t;
    pts.row(s).tail(dim) = x.transpose();
  }
  return pts;
}

/// Quasi-uniform nodes in [0, T] x B(0, R): a cell-centred lattice clipped to the ball,
/// thinned to exactly K nodes by farthest-point selection starting from the centre.
inline NodeSet quasi_uniform_nodes(int count, double horizon, double radius, int dim,
                                   double c_target = std::numeric_limits<double>::infinity(),
                                   std::uint64_t seed = 0, int fill_samples = 20000) {
  if (count < 1) throw ConfigError("quasi_uniform_nodes: K must be >= 1");
  if (dim < 1 || !(horizon > 0.0) || !(radius > 0.0)) {
    throw ConfigError("quasi_uniform_nodes: need dim >= 1, T > 0, R > 0");
  }
  const int big_d = dim + 1;
  NodeSet out;
  out.enclosing_radius = std::sqrt(0.25 * horizon * horizon + radius * radius);
  Eigen::VectorXd center = Eigen::VectorXd::Zero(big_d);
  center[0] = 0.5 * horizon;

  Eigen::MatrixXd candidates;
  if (count == 1) {
    candidates = center.transpose();
  } else {
    constexpr double kMaxLattice = 2.0e5;
    const double extent_volume = horizon * std::pow(2.0 * radius, dim);
    // Initial spacing chosen so that the bounding box holds about 4K cells.
    double spacing = std::pow(extent_volume / (4.0 * count), 1.0 / big_d);
    for (int attempt = 0; attempt < 200; ++attempt) {
      const long mt = std::max(1L, static_cast<long>(std::ceil(horizon / spacing)));
      const long mx = std::max(1L, static_cast<long>(std::ceil(2.0 * radius / spacing)));
      const double total = static_cast<double>(mt) * std::pow(static_cast<double>(mx), dim);
      if (total > kMaxLattice) {
        throw ConfigError("quasi_uniform_nodes: K = " + std::to_string(count) +
                          " exceeds the lattice capacity in dimension " + std::to_string(big_d));
      }
      const double ht = horizon / mt;
      const double hx = 2.0 * radius / mx;
      std::vector<Eigen::VectorXd> inside;
      std::vector<long> idx(dim, 0);
      for (long it = 0; it < mt; ++it) {
        std::fill(idx.begin(), idx.end(), 0L);
        while (true) {
          Eigen::VectorXd p(big_d);
          p[0] = (it + 0.5) * ht;
          for (int a = 0; a < dim; ++a) p[a + 1] = -radius + (idx[a] + 0.5) * hx;
          if (p.tail(dim).norm() <= radius) inside.push_back(std::move(p));
          int a = 0;
          while (a < dim && ++idx[a] == mx) idx[a++] = 0;
          if (a == dim) break;
        }
      }
      const double next_spacing = spacing * 0.85;
      const double next_total = std::ceil(horizon / next_spacing) * std::pow(std::ceil(2.0 * radius / next_spacing), dim);
      if (static_cast<long>(inside.size()) >= 4L * count ||
          (static_cast<long>(inside.size()) >= count && next_total > kMaxLattice)) {
        candidates.resize(static_cast<Eigen::Index>(inside.size()), big_d);
        for (std::size_t i = 0; i < inside.size(); ++i) candidates.row(i) = inside[i].transpose();
        break;
      }
      spacing = next_spacing;
    }
    if (candidates.rows() < count) {
      throw ConfigError("quasi_uniform_nodes: K = " + std::to_string(count) + " exceeds the lattice capacity");
    }
  }

  // Farthest-point thinning.
  const Eigen::Index nc = candidates.rows();
  Eigen::VectorXd dist(nc);
  Eigen::Index first = 0;
  (candidates.rowwise() - center.transpose()).rowwise().squaredNorm().minCoeff(&first);
  out.nodes.resize(count, big_d);
  out.nodes.row(0) = candidates.row(first);
  dist = (candidates.rowwise() - candidates.row(first)).rowwise().squaredNorm();
  for (int k = 1; k < count; ++k) {
    Eigen::Index next = 0;
    dist.maxCoeff(&next);
    out.nodes.row(k) = candidates.row(next);
    dist = dist.cwiseMin((candidates.rowwise() - candidates.row(next)).rowwise().squaredNorm());
  }

  const Eigen::MatrixXd samples = sample_domain(horizon, radius, dim, fill_samples, seed);
  out.fill_distance = fill_distance(out.nodes, samples);
  out.separation = separation_distance(out.nodes);
  if (std::isfinite(out.separation)) out.quasi_uniformity = out.fill_distance / out.separation;
  out.meets_target = !std::isfinite(out.separation) || out.quasi_uniformity <= c_target;
  return out;
}

}  // namespace rdctl
