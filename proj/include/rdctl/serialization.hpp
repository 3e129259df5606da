#pragma once

// Text container for policies. Numbers are written as C99 hex floats, so a write/read
// round trip reproduces every parameter bit for bit.
//
//   rdctl-policy 1
//   variant <zero|linear|riccati|nn|rbf>
//   ...variant fields, matrices as "matrix <name> <rows> <cols>" followed by rows...
//   wrappers <count>
//   <kind> <value>            (one line per wrapper, innermost first)
//   end

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rdctl/error.hpp"
#include "rdctl/policies.hpp"
#include "rdctl/riccati.hpp"
#include "rdctl/training.hpp"

namespace rdctl {

inline constexpr int kPolicyFormatVersion = 1;

inline std::string hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

namespace detail {

inline void write_matrix(std::ostream& os, const std::string& name, const Eigen::MatrixXd& m) {
  os << "matrix " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) os << (j ? " " : "") << hex(m(i, j));
    os << '\n';
  }
}

class TokenReader {
 public:
  explicit TokenReader(std::istream& is) : is_(is) {}

  std::string word() {
    std::string w;
    if (!(is_ >> w)) throw ConfigError("policy file: unexpected end of input");
    return w;
  }
  void expect(const std::string& w) {
    const std::string got = word();
    if (got != w) throw ConfigError("policy file: expected '" + w + "', found '" + got + "'");
  }
  double number() {
    const std::string w = word();
    char* end = nullptr;
    const double v = std::strtod(w.c_str(), &end);
    if (end != w.c_str() + w.size()) throw ConfigError("policy file: malformed number '" + w + "'");
    return v;
  }
  long integer() {
    const std::string w = word();
    char* end = nullptr;
    const long v = std::strtol(w.c_str(), &end, 10);
    if (end != w.c_str() + w.size() || v < 0) throw ConfigError("policy file: malformed count '" + w + "'");
    return v;
  }
  Eigen::MatrixXd matrix(const std::string& name) {
    expect("matrix");
    expect(name);
    const long r = integer();
    const long c = integer();
    Eigen::MatrixXd m(r, c);
    for (long i = 0; i < r; ++i) {
      for (long j = 0; j < c; ++j) m(i, j) = number();
    }
    return m;
  }

 private:
  std::istream& is_;
};

}  // namespace detail

inline void write_policy(std::ostream& os, const FeedbackPolicy& policy) {
  os << "rdctl-policy " << kPolicyFormatVersion << '\n' << "variant " << policy.variant_name() << '\n';
  std::visit(
      [&](const auto& b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, LinearFeedback>) {
          detail::write_matrix(os, "gain", b.gain);
        } else if constexpr (std::is_same_v<T, RiccatiPolicy>) {
          const RiccatiSolution& s = *b.solution;
          os << "convention " << (s.convention() == RiccatiConvention::StandardLqr ? "standard" : "printed") << '\n';
          os << "weights " << hex(s.weights().q) << ' ' << hex(s.weights().r) << ' ' << hex(s.weights().q_terminal)
             << '\n';
          os << "storage " << (s.is_dense() ? "dense" : "diagonal") << '\n';
          const auto& grid = s.time_grid();
          detail::write_matrix(os, "time", Eigen::Map<const Eigen::VectorXd>(grid.data(), grid.size()));
          if (s.is_dense()) {
            for (const auto& m : s.dense_values()) detail::write_matrix(os, "operator", m);
          } else {
            Eigen::MatrixXd all(grid.size(), s.modes());
            for (std::size_t j = 0; j < grid.size(); ++j) all.row(j) = s.diagonal_values()[j].transpose();
            detail::write_matrix(os, "diagonal", all);
          }
        } else if constexpr (std::is_same_v<T, NNParams>) {
          os << "activation " << to_string(b.activation) << '\n';
          detail::write_matrix(os, "inner", b.inner);
          detail::write_matrix(os, "bias", b.bias);
          detail::write_matrix(os, "outer", b.outer);
        } else if constexpr (std::is_same_v<T, RbfData>) {
          os << "kappa " << hex(b.kappa) << '\n';
          detail::write_matrix(os, "nodes", b.nodes);
          detail::write_matrix(os, "weights", b.weights);
        }
      },
      policy.base());
  os << "wrappers " << policy.wrappers().size() << '\n';
  for (const auto& w : policy.wrappers()) {
    std::visit(
        [&](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, FinitelyBased>) os << "finitely_based " << v.modes << '\n';
          if constexpr (std::is_same_v<T, Cutoff>) os << "cutoff " << hex(v.radius) << '\n';
          if constexpr (std::is_same_v<T, RadialClamp>) os << "radial_clamp " << hex(v.bound) << '\n';
          if constexpr (std::is_same_v<T, Scale>) os << "scale " << hex(v.factor) << '\n';
        },
        w);
  }
  os << "end\n";
}

inline FeedbackPolicy read_policy(std::istream& is) {
  detail::TokenReader in(is);
  in.expect("rdctl-policy");
  if (in.integer() != kPolicyFormatVersion) throw ConfigError("policy file: unsupported format version");
  in.expect("variant");
  const std::string variant = in.word();
  FeedbackPolicy::Base base;
  if (variant == "zero") {
    base = ZeroPolicy{};
  } else if (variant == "linear") {
    base = LinearFeedback{in.matrix("gain")};
  } else if (variant == "riccati") {
    in.expect("convention");
    const std::string conv = in.word();
    if (conv != "standard" && conv != "printed") throw ConfigError("policy file: unknown convention '" + conv + "'");
    in.expect("weights");
    RiccatiWeights w;
    w.q = in.number();
    w.r = in.number();
    w.q_terminal = in.number();
    in.expect("storage");
    const std::string storage = in.word();
    const Eigen::MatrixXd t = in.matrix("time");
    std::vector<double> grid(t.data(), t.data() + t.size());
    std::vector<Eigen::VectorXd> diag;
    std::vector<Eigen::MatrixXd> dense;
    if (storage == "dense") {
      for (std::size_t j = 0; j < grid.size(); ++j) dense.push_back(in.matrix("operator"));
    } else if (storage == "diagonal") {
      const Eigen::MatrixXd all = in.matrix("diagonal");
      if (static_cast<std::size_t>(all.rows()) != grid.size()) throw ConfigError("policy file: riccati row count");
      for (Eigen::Index j = 0; j < all.rows(); ++j) diag.push_back(all.row(j).transpose());
    } else {
      throw ConfigError("policy file: unknown riccati storage '" + storage + "'");
    }
    base = RiccatiPolicy{std::make_shared<const RiccatiSolution>(
        std::move(grid), std::move(diag), std::move(dense), w,
        conv == "standard" ? RiccatiConvention::StandardLqr : RiccatiConvention::Printed)};
  } else if (variant == "nn") {
    NNParams p;
    in.expect("activation");
    p.activation = activation_from_string(in.word());
    p.inner = in.matrix("inner");
    p.bias = in.matrix("bias");
    p.outer = in.matrix("outer");
    base = std::move(p);
  } else if (variant == "rbf") {
    RbfData d;
    in.expect("kappa");
    d.kappa = in.number();
    d.nodes = in.matrix("nodes");
    d.weights = in.matrix("weights");
    base = std::move(d);
  } else {
    throw ConfigError("policy file: unknown variant '" + variant + "'");
  }
  in.expect("wrappers");
  const long count = in.integer();
  std::vector<Wrapper> wrappers;
  for (long i = 0; i < count; ++i) {
    const std::string kind = in.word();
    if (kind == "finitely_based") {
      wrappers.push_back(FinitelyBased{static_cast<int>(in.integer())});
    } else if (kind == "cutoff") {
      wrappers.push_back(Cutoff{in.number()});
    } else if (kind == "radial_clamp") {
      wrappers.push_back(RadialClamp{in.number()});
    } else if (kind == "scale") {
      wrappers.push_back(Scale{in.number()});
    } else {
      throw ConfigError("policy file: unknown wrapper '" + kind + "'");
    }
  }
  in.expect("end");
  return FeedbackPolicy(std::move(base), std::move(wrappers));
}

inline std::string policy_to_string(const FeedbackPolicy& policy) {
  std::ostringstream os;
  write_policy(os, policy);
  return os.str();
}

inline FeedbackPolicy policy_from_string(const std::string& text) {
  std::istringstream is(text);
  return read_policy(is);
}

inline void save_policy(const std::string& path, const FeedbackPolicy& policy) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open '" + path + "' for writing");
  write_policy(os, policy);
}

inline FeedbackPolicy load_policy(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open policy file '" + path + "'");
  return read_policy(is);
}

/// Checkpoint: iteration counter, policy container and optimizer moments.
inline void write_checkpoint(std::ostream& os, int iteration, const FeedbackPolicy& policy,
                             const OptimizerState& state) {
  os << "rdctl-checkpoint " << kPolicyFormatVersion << '\n' << "iteration " << iteration << '\n';
  write_policy(os, policy);
  os << "optimizer-step " << state.step << '\n';
  detail::write_matrix(os, "first", state.first);
  detail::write_matrix(os, "second", state.second);
  os << "end\n";
}

struct Checkpoint {
  int iteration = 0;
  FeedbackPolicy policy;
  OptimizerState state;
};

inline Checkpoint read_checkpoint(std::istream& is) {
  detail::TokenReader in(is);
  in.expect("rdctl-checkpoint");
  if (in.integer() != kPolicyFormatVersion) throw ConfigError("checkpoint: unsupported format version");
  in.expect("iteration");
  Checkpoint c;
  c.iteration = static_cast<int>(in.integer());
  c.policy = read_policy(is);
  in.expect("optimizer-step");
  c.state.step = in.integer();
  c.state.first = in.matrix("first");
  c.state.second = in.matrix("second");
  in.expect("end");
  return c;
}

}  // namespace rdctl
