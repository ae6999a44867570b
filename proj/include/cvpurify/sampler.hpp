#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "cvpurify/core.hpp"
#include "cvpurify/protocol.hpp"
#include "cvpurify/random.hpp"

namespace cvpurify {

/// Homodyne measurement at local-oscillator phase theta: theta = 0 reads
/// x, theta = pi/2 reads p.
struct HomodyneConfig {
  double theta = 0.0;
  std::size_t n_samples = 100000;
  std::uint64_t seed = 1;
};

/// Imperfections of the verification stage.
struct DetectorModel {
  double eta = 1.0;               // quantum efficiency, (0, 1]
  double visibility = 1.0;        // interference mode-match, [0, 1]
  double electronic_noise = 0.0;  // dark-noise variance, vacuum units

  void validate() const {
    if (!(eta > 0.0 && eta <= 1.0)) {
      throw std::invalid_argument("DetectorModel: eta outside (0, 1]");
    }
    if (!(visibility >= 0.0 && visibility <= 1.0)) {
      throw std::invalid_argument("DetectorModel: visibility outside [0, 1]");
    }
    if (electronic_noise < 0.0) {
      throw std::invalid_argument("DetectorModel: electronic noise must be >= 0");
    }
  }
};

/// Analytic mean of the rotated quadrature cos(theta) x + sin(theta) p.
inline double quadrature_mean(const GaussianState& state, int mode, double theta) {
  const auto m = state.mode_mean(mode);
  return std::cos(theta) * m(0) + std::sin(theta) * m(1);
}

/// Analytic variance of the rotated quadrature, including the xp
/// covariance term.
inline double quadrature_variance(const GaussianState& state, int mode, double theta) {
  const auto v = state.mode_cov(mode);
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return c * c * v(0, 0) + s * s * v(1, 1) + 2.0 * s * c * v(0, 1);
}

/// i.i.d. Gaussian homodyne outcomes for one mode; reproducible for a
/// fixed seed.
inline std::vector<double> sample_quadrature(const GaussianState& state, int mode,
                                             const HomodyneConfig& cfg) {
  state.check_mode(mode);
  if (cfg.n_samples < 1) {
    throw std::invalid_argument("sample_quadrature: n_samples must be >= 1");
  }
  const double mean = quadrature_mean(state, mode, cfg.theta);
  const double variance = std::max(0.0, quadrature_variance(state, mode, cfg.theta));
  const double sigma = std::sqrt(variance);
  GaussianSampler sampler(cfg.seed);
  std::vector<double> out(cfg.n_samples);
  for (auto& value : out) {
    value = sampler.normal(mean, sigma);
  }
  return out;
}

struct SampleStats {
  double mean = 0.0;
  double variance = 0.0;
  double se_mean = 0.0;
  double se_variance = 0.0;
  std::size_t n = 0;
};

/// Unbiased mean/variance with Gaussian standard errors:
/// SE(mean) = sqrt(var/n), SE(var) = var * sqrt(2/(n-1)).
inline SampleStats estimate_stats(std::span<const double> samples) {
  const std::size_t n = samples.size();
  if (n < 2) {
    throw std::invalid_argument("estimate_stats: need at least 2 samples");
  }
  double sum = 0.0;
  for (double s : samples) sum += s;
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double s : samples) ss += (s - mean) * (s - mean);
  const double variance = ss / static_cast<double>(n - 1);
  SampleStats stats;
  stats.mean = mean;
  stats.variance = variance;
  stats.se_mean = std::sqrt(variance / static_cast<double>(n));
  stats.se_variance = variance * std::sqrt(2.0 / static_cast<double>(n - 1));
  stats.n = n;
  return stats;
}

/// Result of inferring out the detector efficiency.  `physical` is false
/// when the corrected variance came out negative, i.e. the raw measurement
/// sat below the detector-limited vacuum level.
struct CorrectedVariance {
  double value = 0.0;
  bool physical = true;
};

/// Inverts the loss channel on a variance: V = (measured - (1 - eta))/eta.
/// Exact algebraic inverse of loss_channel, so the round trip is identity.
inline CorrectedVariance correct_efficiency(double measured_variance, double eta) {
  if (!(eta > 0.0 && eta <= 1.0)) {
    throw std::invalid_argument("correct_efficiency: eta outside (0, 1]");
  }
  CorrectedVariance out;
  out.value = (measured_variance - (1.0 - eta)) / eta;
  out.physical = out.value >= 0.0;
  return out;
}

/// Mean-amplitude gain left by imperfect mode matching of visibility v.
///
/// Model: at each concentration stage only the overlapping fraction v of
/// the newly mixed copy interferes; the orthogonal remainder carries no
/// coherent amplitude into the detected mode but keeps contributing noise
/// at its own variance, so variances are unchanged and only means shrink.
/// For two copies the gain is (1 + v)/2: unity at v = 1, and 1/2 at v = 0
/// where only the self term survives.
inline double visibility_gain(int n_copies, double visibility) {
  if (n_copies < 2) {
    throw std::invalid_argument("visibility_gain: n_copies must be >= 2");
  }
  if (!(visibility >= 0.0 && visibility <= 1.0)) {
    throw std::invalid_argument("visibility_gain: visibility outside [0, 1]");
  }
  if (visibility == 1.0) {
    return 1.0;  // perfect overlap is the identity, exactly
  }
  double running = 1.0;  // mean of the concentrated mode per unit input mean
  for (int k = 1; k < n_copies; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(k + 1);
    running = std::sqrt(t) * running + visibility * std::sqrt(1.0 - t);
  }
  return std::sqrt(1.0 / static_cast<double>(n_copies)) * running;
}

struct VisibilityResult {
  Eigen::Vector2d means = Eigen::Vector2d::Zero();
  GainReport gains;
};

/// Degrades the purifier's output means by the visibility model above.
inline VisibilityResult apply_visibility(const Eigen::Vector2d& output_means, double visibility,
                                         int n_copies = 2) {
  const double g = visibility_gain(n_copies, visibility);
  return {g * output_means, GainReport{g, g}};
}

}  // namespace cvpurify
