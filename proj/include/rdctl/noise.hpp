#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "rdctl/error.hpp"
#include "rdctl/rng.hpp"
#include "rdctl/spectral.hpp"

namespace rdctl {

/// Diagonal dispersion B sqrt(Q) = scale * (-A)^{-gamma}: mode n carries
/// amplitude scale * lambda_n^{-gamma}. Modes with lambda_n = 0 receive no noise.
class NoiseModel {
 public:
  NoiseModel(const SpectralModel& model, double gamma, double scale) : gamma_(gamma), scale_(scale) {
    if (!(scale >= 0.0) || !std::isfinite(scale) || !std::isfinite(gamma)) {
      throw ConfigError("noise model: scale must be finite and non-negative");
    }
    std_.resize(model.modes());
    for (int i = 0; i < model.modes(); ++i) {
      const double lambda = model.eigenvalue(i);
      std_[i] = (lambda > 0.0 && scale > 0.0) ? scale * std::pow(lambda, -gamma) : 0.0;
    }
  }

  /// Explicit per-mode amplitudes (gamma and scale are then informational only).
  static NoiseModel from_amplitudes(std::vector<double> amplitudes) {
    for (double s : amplitudes) {
      if (!(s >= 0.0) || !std::isfinite(s)) throw ConfigError("noise model: amplitudes must be finite and >= 0");
    }
    NoiseModel out;
    out.std_ = std::move(amplitudes);
    return out;
  }

  double gamma() const { return gamma_; }
  double scale() const { return scale_; }
  std::span<const double> per_mode_std() const { return std_; }
  double per_mode_std(int i) const { return std_[i]; }
  int modes() const { return static_cast<int>(std_.size()); }

 private:
  NoiseModel() = default;
  double gamma_ = 0.0;
  double scale_ = 0.0;
  std::vector<double> std_;
};

inline double hilbert_schmidt_norm(const NoiseModel& noise, double r, const SpectralModel& model) {
  return hilbert_schmidt_norm(noise.per_mode_std(), r, model);
}

/// Gaussian increments of one sample path. Every row draws one standard normal per
/// mode (also for silent modes), so the stream layout does not depend on amplitudes.
class NoiseStream {
 public:
  NoiseStream(std::uint64_t seed, std::uint64_t sample_index)
      : engine_(make_engine(seed, streams::kNoise, sample_index)) {}

  template <class Row>
  void next(const NoiseModel& noise, double dt, Row&& row) {
    const double sdt = std::sqrt(dt);
    for (int k = 0; k < noise.modes(); ++k) {
      row[k] = normal_(engine_) * noise.per_mode_std(k) * sdt;
    }
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace rdctl
