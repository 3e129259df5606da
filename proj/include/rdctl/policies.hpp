#pragma once

// Feedback ansatz spaces behind one evaluable value type. A policy is a base map
// G(t, u) plus a stack of wrappers; wrappers are applied in stack order, so the last
// wrapper is the outermost.

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SVD>

#include "rdctl/error.hpp"
#include "rdctl/rbf.hpp"
#include "rdctl/riccati.hpp"
#include "rdctl/rng.hpp"
#include "rdctl/spectral.hpp"

namespace rdctl {

enum class Activation { ReLU, Tanh, Sigmoid };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::ReLU: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "relu";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::ReLU;
  if (s == "tanh") return Activation::Tanh;
  if (s == "sigmoid") return Activation::Sigmoid;
  throw ConfigError("unknown activation '" + s + "'");
}

inline double activate(Activation a, double z) {
  switch (a) {
    case Activation::ReLU: return z > 0.0 ? z : 0.0;
    case Activation::Tanh: return std::tanh(z);
    case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-z));
  }
  return 0.0;
}

/// theta'(z); the ReLU derivative at 0 is taken as 0.
inline double activate_derivative(Activation a, double z) {
  switch (a) {
    case Activation::ReLU: return z > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: {
      const double th = std::tanh(z);
      return 1.0 - th * th;
    }
    case Activation::Sigmoid: {
      const double s = 1.0 / (1.0 + std::exp(-z));
      return s * (1.0 - s);
    }
  }
  return 0.0;
}

/// psi(t, u) = C theta(A [t; u] + a).
struct NNParams {
  Eigen::MatrixXd inner;  // k x (N + 1); column 0 multiplies t
  Eigen::VectorXd bias;   // k
  Eigen::MatrixXd outer;  // N x k
  Activation activation = Activation::ReLU;

  int neurons() const { return static_cast<int>(inner.rows()); }
  int state_dim() const { return static_cast<int>(inner.cols()) - 1; }
  int output_dim() const { return static_cast<int>(outer.rows()); }

  void validate() const {
    if (inner.rows() != bias.size() || outer.cols() != inner.rows() || inner.cols() < 2) {
      throw ConfigError("nn params: inconsistent dimensions");
    }
    if (!inner.allFinite() || !bias.allFinite() || !outer.allFinite()) {
      throw ConfigError("nn params: non-finite entries");
    }
  }

  /// Pre-activations for a batch of states (columns).
  Eigen::MatrixXd preactivation(double t, const Eigen::Ref<const Eigen::MatrixXd>& states) const {
    Eigen::MatrixXd z = inner.rightCols(state_dim()) * states;
    z.colwise() += inner.col(0) * t + bias;
    return z;
  }

  Eigen::MatrixXd forward(double t, const Eigen::Ref<const Eigen::MatrixXd>& states) const {
    Eigen::MatrixXd h = preactivation(t, states);
    h = h.unaryExpr([a = activation](double z) { return activate(a, z); });
    return outer * h;
  }
};

/// Time-invariant linear feedback g = W u.
struct LinearFeedback {
  Eigen::MatrixXd gain;
};

struct ZeroPolicy {};

struct RiccatiPolicy {
  std::shared_ptr<const RiccatiSolution> solution;
};

/// G^h(t, u) = P_h G(t, P_h u) with P_h keeping the first `modes` coordinates.
struct FinitelyBased {
  int modes = 1;
};
/// Evaluates the inner policy at eta^l(u).
struct Cutoff {
  double radius = 1.0;
};
/// Projects the output onto the ball of radius `bound`.
struct RadialClamp {
  double bound = 1.0;
};
struct Scale {
  double factor = 1.0;
};

using Wrapper = std::variant<FinitelyBased, Cutoff, RadialClamp, Scale>;

/// eta^l(x): identity inside the ball of radius l, radial projection onto it outside.
inline Eigen::VectorXd cutoff(const Eigen::Ref<const Eigen::VectorXd>& x, double l) {
  if (!(l > 0.0)) throw ConfigError("cutoff radius must be positive");
  const double n = x.norm();
  if (n <= l) return x;
  return x * (l / n);
}

class FeedbackPolicy {
 public:
  using Base = std::variant<ZeroPolicy, LinearFeedback, RiccatiPolicy, NNParams, RbfData>;

  FeedbackPolicy() : base_(ZeroPolicy{}) {}
  explicit FeedbackPolicy(Base base, std::vector<Wrapper> wrappers = {})
      : base_(std::move(base)), wrappers_(std::move(wrappers)) {
    if (const auto* nn = std::get_if<NNParams>(&base_)) nn->validate();
    if (const auto* rp = std::get_if<RiccatiPolicy>(&base_); rp && !rp->solution) {
      throw ConfigError("riccati policy without a solution");
    }
    for (const auto& w : wrappers_) validate(w);
  }

  static FeedbackPolicy zero() { return FeedbackPolicy(ZeroPolicy{}); }
  static FeedbackPolicy riccati(RiccatiSolution solution) {
    return FeedbackPolicy(RiccatiPolicy{std::make_shared<const RiccatiSolution>(std::move(solution))});
  }
  static FeedbackPolicy neural(NNParams params) { return FeedbackPolicy(std::move(params)); }
  static FeedbackPolicy rbf(RbfData data) { return FeedbackPolicy(std::move(data)); }
  static FeedbackPolicy linear(Eigen::MatrixXd gain) { return FeedbackPolicy(LinearFeedback{std::move(gain)}); }

  const Base& base() const { return base_; }
  Base& base() { return base_; }
  const std::vector<Wrapper>& wrappers() const { return wrappers_; }

  std::string variant_name() const {
    static const char* names[] = {"zero", "linear", "riccati", "nn", "rbf"};
    return names[base_.index()];
  }

  FeedbackPolicy wrapped(Wrapper w) const {
    validate(w);
    FeedbackPolicy out = *this;
    out.wrappers_.push_back(w);
    return out;
  }

  StateVector eval(double t, const Eigen::Ref<const Eigen::VectorXd>& u) const {
    StateVector g = eval_level(static_cast<int>(wrappers_.size()), t, u);
    if (!g.allFinite()) throw NumericError("policy '" + variant_name() + "' produced a non-finite control");
    return g;
  }

  /// Column-wise evaluation for a batch of states (modes x batch).
  Eigen::MatrixXd eval_batch(double t, const Eigen::Ref<const Eigen::MatrixXd>& states) const {
    Eigen::MatrixXd out;
    if (wrappers_.empty() && std::holds_alternative<NNParams>(base_)) {
      const auto& nn = std::get<NNParams>(base_);
      out = fit_rows(nn.forward(t, fit_rows(states, nn.state_dim())), states.rows());
    } else if (wrappers_.empty() && std::holds_alternative<ZeroPolicy>(base_)) {
      out = Eigen::MatrixXd::Zero(states.rows(), states.cols());
    } else if (wrappers_.empty() && std::holds_alternative<RiccatiPolicy>(base_) &&
               !std::get<RiccatiPolicy>(base_).solution->is_dense()) {
      const auto& sol = *std::get<RiccatiPolicy>(base_).solution;
      if (states.rows() != sol.modes()) throw ConfigError("riccati feedback: state length does not match the mode count");
      out = states.array().colwise() * sol.diagonal_gain(t).array();
    } else if (wrappers_.empty() && std::holds_alternative<LinearFeedback>(base_)) {
      const auto& w = std::get<LinearFeedback>(base_).gain;
      out = fit_rows(w * fit_rows(states, static_cast<int>(w.cols())), states.rows());
    } else {
      out.resize(states.rows(), states.cols());
      for (Eigen::Index b = 0; b < states.cols(); ++b) out.col(b) = eval_level(static_cast<int>(wrappers_.size()), t, states.col(b));
    }
    if (!out.allFinite()) throw NumericError("policy '" + variant_name() + "' produced a non-finite control");
    return out;
  }

 private:
  static void validate(const Wrapper& w) {
    std::visit(
        [](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, FinitelyBased>) {
            if (v.modes < 1) throw ConfigError("finitely based wrapper needs target modes >= 1");
          } else if constexpr (std::is_same_v<T, Cutoff>) {
            if (!(v.radius > 0.0)) throw ConfigError("cutoff radius must be positive");
          } else if constexpr (std::is_same_v<T, RadialClamp>) {
            if (!(v.bound > 0.0)) throw ConfigError("radial clamp bound must be positive");
          } else {
            if (!std::isfinite(v.factor)) throw ConfigError("scale factor must be finite");
          }
        },
        w);
  }

  // Truncates or zero-pads the rows to n.
  static Eigen::MatrixXd fit_rows(const Eigen::Ref<const Eigen::MatrixXd>& m, int n) {
    if (m.rows() == n) return m;
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, m.cols());
    const Eigen::Index keep = std::min<Eigen::Index>(n, m.rows());
    out.topRows(keep) = m.topRows(keep);
    return out;
  }

  StateVector eval_base(double t, const Eigen::Ref<const Eigen::VectorXd>& u) const {
    const Eigen::Index n = u.size();
    return std::visit(
        [&](const auto& b) -> StateVector {
          using T = std::decay_t<decltype(b)>;
          if constexpr (std::is_same_v<T, ZeroPolicy>) {
            return StateVector::Zero(n);
          } else if constexpr (std::is_same_v<T, LinearFeedback>) {
            return fit_rows(b.gain * fit_rows(u, static_cast<int>(b.gain.cols())), static_cast<int>(n));
          } else if constexpr (std::is_same_v<T, RiccatiPolicy>) {
            return b.solution->apply(t, u);
          } else if constexpr (std::is_same_v<T, NNParams>) {
            return fit_rows(b.forward(t, fit_rows(u, b.state_dim())), static_cast<int>(n));
          } else {
            Eigen::VectorXd x = Eigen::VectorXd::Zero(1 + b.ambient_dim());
            x[0] = t;
            const Eigen::Index keep = std::min<Eigen::Index>(b.ambient_dim(), n);
            x.segment(1, keep) = u.head(keep);
            return fit_rows(b.evaluate(x), static_cast<int>(n));
          }
        },
        base_);
  }

  StateVector eval_level(int level, double t, const Eigen::Ref<const Eigen::VectorXd>& u) const {
    if (level == 0) return eval_base(t, u);
    return std::visit(
        [&](const auto& w) -> StateVector {
          using T = std::decay_t<decltype(w)>;
          if constexpr (std::is_same_v<T, FinitelyBased>) {
            StateVector v = u;
            if (w.modes < v.size()) v.tail(v.size() - w.modes).setZero();
            StateVector g = eval_level(level - 1, t, v);
            if (w.modes < g.size()) g.tail(g.size() - w.modes).setZero();
            return g;
          } else if constexpr (std::is_same_v<T, Cutoff>) {
            return eval_level(level - 1, t, cutoff(u, w.radius));
          } else if constexpr (std::is_same_v<T, RadialClamp>) {
            return cutoff(eval_level(level - 1, t, u), w.bound);
          } else {
            return w.factor * eval_level(level - 1, t, u);
          }
        },
        wrappers_[level - 1]);
  }

  Base base_;
  std::vector<Wrapper> wrappers_;
};

/// G^h(t, u) = P_h G(t, P_h u); wrapping twice with the same target is a no-op.
inline FeedbackPolicy finitely_based(const FeedbackPolicy& policy, int target_modes) {
  if (target_modes < 1) throw ConfigError("finitely_based: target modes must be >= 1");
  if (!policy.wrappers().empty()) {
    if (const auto* fb = std::get_if<FinitelyBased>(&policy.wrappers().back()); fb && fb->modes == target_modes) {
      return policy;
    }
  }
  return policy.wrapped(FinitelyBased{target_modes});
}

/// Sampled estimate of sup_{(t,u) in [t0,t1] x B(0,R)} ||G_a(t,u) - G_b(t,u)||_H^2.
/// The maximum over finitely many samples never exceeds the true supremum.
inline double sup_error(const FeedbackPolicy& a, const FeedbackPolicy& b, int state_dim, double t0, double t1,
                        double radius, int samples, std::uint64_t seed) {
  if (!(radius > 0.0) || samples < 1 || state_dim < 1) {
    throw ConfigError("sup_error: need R > 0, samples >= 1, state_dim >= 1");
  }
  auto engine = make_engine(seed, streams::kBallSampling, 0);
  std::uniform_real_distribution<double> time(t0, t1);
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    const double t = t0 == t1 ? t0 : time(engine);
    const Eigen::VectorXd u = sample_ball(engine, state_dim, radius);
    worst = std::max(worst, (a.eval(t, u) - b.eval(t, u)).squaredNorm());
  }
  return worst;
}

inline double spectral_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()[0];
}

/// Lipschitz constant of u -> C theta(A_u u + ...) from ||C||_2 ||A||_2 lip(theta).
inline double nn_lipschitz_bound(const NNParams& p) {
  const double lip = p.activation == Activation::Sigmoid ? 0.25 : 1.0;
  return spectral_norm(p.outer) * spectral_norm(p.inner) * lip;
}

/// C with ||G(t, u)|| <= C (1 + ||u||) for t in [0, horizon].
inline double linear_growth_bound(const FeedbackPolicy& policy, double horizon) {
  double c = std::visit(
      [&](const auto& b) -> double {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, ZeroPolicy>) {
          return 0.0;
        } else if constexpr (std::is_same_v<T, LinearFeedback>) {
          return spectral_norm(b.gain);
        } else if constexpr (std::is_same_v<T, RiccatiPolicy>) {
          double m = 0.0;
          for (double t : b.solution->time_grid()) {
            m = std::max(m, b.solution->is_dense() ? spectral_norm(b.solution->dense_gain(t))
                                                   : b.solution->diagonal_gain(t).cwiseAbs().maxCoeff());
          }
          return m;
        } else if constexpr (std::is_same_v<T, NNParams>) {
          const double cn = spectral_norm(b.outer);
          if (b.activation == Activation::Sigmoid) return cn * std::sqrt(static_cast<double>(b.neurons()));
          // |theta(z)| <= |z| for ReLU and tanh.
          const double au = spectral_norm(b.inner.rightCols(b.state_dim()));
          const double offset = (b.inner.col(0) * horizon).norm() + b.bias.norm();
          return cn * std::max(au, offset);
        } else {
          // Phi <= 1, so |s(x)| <= sum_i |alpha_i|.
          return b.weights.rowwise().norm().sum();
        }
      },
      policy.base());
  for (const auto& w : policy.wrappers()) {
    if (const auto* s = std::get_if<Scale>(&w)) c *= std::abs(s->factor);
    if (const auto* k = std::get_if<RadialClamp>(&w)) c = std::min(c, k->bound);
  }
  return c;
}

}  // namespace rdctl
