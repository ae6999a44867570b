#pragma once

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "cvpurify/core.hpp"

namespace cvpurify {

/// Unity-gain coherent-state fidelity for a single-mode Gaussian state with
/// diagonal covariance diag(vx, vp) and mean matching the target:
/// F = 2 / sqrt((1 + vx)(1 + vp)).
inline double unity_gain_fidelity(double vx, double vp) {
  if (vx < 0.0 || vp < 0.0) {
    throw std::invalid_argument("unity_gain_fidelity: variances must be non-negative");
  }
  return 2.0 / std::sqrt((1.0 + vx) * (1.0 + vp));
}

/// Fidelity F = <alpha| rho |alpha> between a single-mode Gaussian state and
/// the coherent state of the given amplitude.
///
/// General means and non-diagonal covariances are supported:
///   F = 2 / sqrt(det(I + V)) * exp(-1/2 delta^T (I + V)^{-1} delta)
/// with delta the mean offset.  For a diagonal V and matched mean this
/// reduces to 2 / sqrt((1+Vx)(1+Vp)).  The displaced-mean form is validated
/// against an independent Wigner-overlap integration in the test suite.
inline double fidelity_coherent(const GaussianState& state, const CoherentAmplitude& target) {
  if (state.n_modes() != 1) {
    throw std::invalid_argument("fidelity_coherent: state must be single-mode, has " +
                                std::to_string(state.n_modes()));
  }
  if (!state.is_physical()) {
    throw std::domain_error("fidelity_coherent: state violates cov + i*Omega >= 0");
  }
  const Eigen::Matrix2d sum = Eigen::Matrix2d::Identity() + state.mode_cov(0);
  Eigen::Vector2d delta = state.mode_mean(0) - Eigen::Vector2d(target.x_mean, target.p_mean);
  const double det = sum.determinant();
  const double quad = delta.dot(sum.inverse() * delta);
  const double f = 2.0 / std::sqrt(det) * std::exp(-0.5 * quad);
  return std::min(f, 1.0);
}

}  // namespace cvpurify
