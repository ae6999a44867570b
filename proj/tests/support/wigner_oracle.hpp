#pragma once

// Test-only fidelity oracle: brute-force phase-space integration of the
// Wigner overlap 4*pi * integral(W_state * W_target).  Independent of the
// closed-form fidelity path -- it touches only means and covariances and
// does its own Gaussian evaluation on a grid.

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "cvpurify/core.hpp"

namespace cvpurify::testing {

struct PhaseSpaceGrid {
  double x_lo = -10.0;
  double x_hi = 10.0;
  double p_lo = -10.0;
  double p_hi = 10.0;
  int n_x = 400;
  int n_p = 400;
};

namespace detail {

struct GaussianPdf {
  Eigen::Vector2d mean;
  Eigen::Matrix2d cov_inverse;
  double norm;

  GaussianPdf(const Eigen::Vector2d& m, const Eigen::Matrix2d& cov)
      : mean(m), cov_inverse(cov.inverse()),
        norm(1.0 / (2.0 * 3.14159265358979323846 * std::sqrt(cov.determinant()))) {}

  double operator()(double x, double p) const {
    const Eigen::Vector2d r(x - mean(0), p - mean(1));
    return norm * std::exp(-0.5 * r.dot(cov_inverse * r));
  }
};

inline void require_coverage(const PhaseSpaceGrid& grid, const Eigen::Vector2d& mean,
                             const Eigen::Matrix2d& cov, const std::string& label) {
  const double sx = 6.0 * std::sqrt(cov(0, 0));
  const double sp = 6.0 * std::sqrt(cov(1, 1));
  if (grid.x_lo > mean(0) - sx || grid.x_hi < mean(0) + sx || grid.p_lo > mean(1) - sp ||
      grid.p_hi < mean(1) + sp) {
    throw std::invalid_argument(
        "wigner_overlap: grid does not cover 6 standard deviations of the " + label +
        " state (needs x in [" + std::to_string(mean(0) - sx) + ", " +
        std::to_string(mean(0) + sx) + "], p in [" + std::to_string(mean(1) - sp) + ", " +
        std::to_string(mean(1) + sp) + "])");
  }
}

}  // namespace detail

/// Numerical overlap of the state's Wigner function with the target
/// coherent state's, normalized so that F(pure state, itself) = 1.
inline double wigner_overlap(const GaussianState& state, const CoherentAmplitude& target,
                             const PhaseSpaceGrid& grid) {
  if (state.n_modes() != 1) {
    throw std::invalid_argument("wigner_overlap: state must be single-mode");
  }
  if (grid.n_x < 2 || grid.n_p < 2) {
    throw std::invalid_argument("wigner_overlap: grid resolution must be >= 2 per axis");
  }
  const Eigen::Vector2d target_mean(target.x_mean, target.p_mean);
  const Eigen::Matrix2d identity = Eigen::Matrix2d::Identity();
  detail::require_coverage(grid, state.mode_mean(0), state.mode_cov(0), "input");
  detail::require_coverage(grid, target_mean, identity, "target");

  const detail::GaussianPdf w_state(state.mode_mean(0), state.mode_cov(0));
  const detail::GaussianPdf w_target(target_mean, identity);

  const double hx = (grid.x_hi - grid.x_lo) / static_cast<double>(grid.n_x - 1);
  const double hp = (grid.p_hi - grid.p_lo) / static_cast<double>(grid.n_p - 1);
  double sum = 0.0;
  for (int i = 0; i < grid.n_x; ++i) {
    const double x = grid.x_lo + hx * static_cast<double>(i);
    for (int j = 0; j < grid.n_p; ++j) {
      const double p = grid.p_lo + hp * static_cast<double>(j);
      sum += w_state(x, p) * w_target(x, p);
    }
  }
  return 4.0 * 3.14159265358979323846 * sum * hx * hp;
}

/// Builds a grid covering both states with margin (default 6.5 sigma) at
/// the given step.
inline PhaseSpaceGrid make_covering_grid(const GaussianState& state,
                                         const CoherentAmplitude& target, double sigmas = 6.5,
                                         double step = 0.05) {
  const auto mean = state.mode_mean(0);
  const auto cov = state.mode_cov(0);
  const double sx = std::sqrt(cov(0, 0));
  const double sp = std::sqrt(cov(1, 1));
  PhaseSpaceGrid grid;
  grid.x_lo = std::min(mean(0) - sigmas * sx, target.x_mean - sigmas);
  grid.x_hi = std::max(mean(0) + sigmas * sx, target.x_mean + sigmas);
  grid.p_lo = std::min(mean(1) - sigmas * sp, target.p_mean - sigmas);
  grid.p_hi = std::max(mean(1) + sigmas * sp, target.p_mean + sigmas);
  grid.n_x = static_cast<int>((grid.x_hi - grid.x_lo) / step) + 2;
  grid.n_p = static_cast<int>((grid.p_hi - grid.p_lo) / step) + 2;
  return grid;
}

}  // namespace cvpurify::testing
