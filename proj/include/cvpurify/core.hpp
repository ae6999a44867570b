#pragma once

// Gaussian-state algebra for continuous-variable optics.
//
// Quadrature convention used throughout this library: [x, p] = 2i, so the
// vacuum state has unit variance in both quadratures and the coherent
// amplitude is alpha = (<x> + i<p>)/2.  Means are stored in vacuum
// standard-deviation units, covariances in the same units squared, with
// quadratures ordered (x1, p1, x2, p2, ...).  Beware when comparing with
// other CV codes: most use hbar = 1 (vacuum variance 1/2) or hbar = 1/2
// conventions, and every closed-form expression here (notably the
// coherent-state fidelity 2/sqrt((1+Vx)(1+Vp))) changes shape under
// rescaling.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

namespace cvpurify {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Tolerances for exact linear-algebra identities vs. eigenvalue checks.
inline constexpr double kSymplecticTol = 1e-10;
inline constexpr double kSymmetryTol = 1e-10;
inline constexpr double kPhysicalityTol = 1e-9;

/// Standard symplectic form: block-diagonal 2x2 blocks [[0,1],[-1,0]].
inline Mat symplectic_form(int n_modes) {
  if (n_modes < 1) {
    throw std::invalid_argument("symplectic_form: n_modes must be >= 1");
  }
  Mat omega = Mat::Zero(2 * n_modes, 2 * n_modes);
  for (int k = 0; k < n_modes; ++k) {
    omega(2 * k, 2 * k + 1) = 1.0;
    omega(2 * k + 1, 2 * k) = -1.0;
  }
  return omega;
}

/// Mean quadrature amplitudes of a coherent state, alpha = (x + ip)/2.
struct CoherentAmplitude {
  double x_mean = 0.0;
  double p_mean = 0.0;

  std::complex<double> alpha() const { return {0.5 * x_mean, 0.5 * p_mean}; }
  double photon_number() const {
    return 0.25 * (x_mean * x_mean + p_mean * p_mean);
  }
};

/// Additive Gaussian noise, lambda_x / lambda_p added variance per
/// quadrature (vacuum units).  Symmetric iff the two are equal.
struct NoiseChannel {
  double lambda_x = 0.0;
  double lambda_p = 0.0;

  NoiseChannel(double lx, double lp) : lambda_x(lx), lambda_p(lp) {
    if (lx < 0.0 || lp < 0.0) {
      throw std::invalid_argument(
          "NoiseChannel: added variances must be non-negative, got (" +
          std::to_string(lx) + ", " + std::to_string(lp) + ")");
    }
  }

  static NoiseChannel symmetric(double lambda) { return {lambda, lambda}; }
  bool is_symmetric() const { return lambda_x == lambda_p; }
};

/// An n-mode Gaussian state: mean vector and symmetric covariance matrix.
///
/// The constructor validates symmetry (relative tolerance 1e-10) and then
/// stores the symmetrized matrix so downstream eigensolvers see an exactly
/// self-adjoint operand.  Physicality (cov + i*Omega >= 0) is checked on
/// demand, not on construction, so intermediate unnormalized data can be
/// assembled freely.
class GaussianState {
 public:
  GaussianState(Vec mean, Mat cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
    const auto dim = mean_.size();
    if (dim < 2 || dim % 2 != 0) {
      throw std::invalid_argument("GaussianState: mean length must be a positive multiple of 2");
    }
    if (cov_.rows() != dim || cov_.cols() != dim) {
      throw std::invalid_argument("GaussianState: covariance must be " + std::to_string(dim) +
                                  "x" + std::to_string(dim));
    }
    const double scale = std::max(1.0, cov_.cwiseAbs().maxCoeff());
    const double asym = (cov_ - cov_.transpose()).cwiseAbs().maxCoeff();
    if (asym > kSymmetryTol * scale) {
      throw std::invalid_argument("GaussianState: covariance not symmetric (max asymmetry " +
                                  std::to_string(asym) + ")");
    }
    cov_ = ((cov_ + cov_.transpose()) / 2.0).eval();
    n_modes_ = static_cast<int>(dim / 2);
  }

  int n_modes() const { return n_modes_; }
  const Vec& mean() const { return mean_; }
  const Mat& cov() const { return cov_; }

  Eigen::Vector2d mode_mean(int mode) const {
    check_mode(mode);
    return {mean_(2 * mode), mean_(2 * mode + 1)};
  }

  Eigen::Matrix2d mode_cov(int mode) const {
    check_mode(mode);
    return cov_.block<2, 2>(2 * mode, 2 * mode);
  }

  /// Smallest eigenvalue of cov + i*Omega; non-negative (within tolerance)
  /// for physical states.
  double physicality_margin() const {
    Eigen::MatrixXcd m = cov_.cast<std::complex<double>>();
    const Mat omega = symplectic_form(n_modes_);
    m += std::complex<double>(0.0, 1.0) * omega.cast<std::complex<double>>();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(m, Eigen::EigenvaluesOnly);
    return solver.eigenvalues().minCoeff();
  }

  bool is_physical(double tol = kPhysicalityTol) const {
    return physicality_margin() >= -tol;
  }

  void check_mode(int mode) const {
    if (mode < 0 || mode >= n_modes_) {
      throw std::invalid_argument("mode index " + std::to_string(mode) +
                                  " out of range for " + std::to_string(n_modes_) + " modes");
    }
  }

 private:
  Vec mean_;
  Mat cov_;
  int n_modes_ = 0;
};

/// Linear phase-space map r -> S r + d.  S must be symplectic:
/// S Omega S^T = Omega within 1e-10 elementwise.
struct SymplecticTransform {
  Mat S;
  Vec d;

  SymplecticTransform(Mat s, Vec disp) : S(std::move(s)), d(std::move(disp)) {
    const auto dim = S.rows();
    if (dim < 2 || dim % 2 != 0 || S.cols() != dim) {
      throw std::invalid_argument("SymplecticTransform: S must be square with even dimension");
    }
    if (d.size() != dim) {
      throw std::invalid_argument("SymplecticTransform: displacement length mismatch");
    }
    const Mat omega = symplectic_form(static_cast<int>(dim / 2));
    const double defect = (S * omega * S.transpose() - omega).cwiseAbs().maxCoeff();
    if (defect > kSymplecticTol) {
      throw std::invalid_argument("SymplecticTransform: S Omega S^T != Omega (defect " +
                                  std::to_string(defect) + ")");
    }
  }

  int n_modes() const { return static_cast<int>(S.rows() / 2); }

  /// Composition: (b * a) applies a first, then b.
  friend SymplecticTransform operator*(const SymplecticTransform& b, const SymplecticTransform& a) {
    if (a.S.rows() != b.S.rows()) {
      throw std::invalid_argument("SymplecticTransform: composing transforms of different size");
    }
    return {b.S * a.S, b.S * a.d + b.d};
  }

  static SymplecticTransform identity(int n_modes) {
    return {Mat::Identity(2 * n_modes, 2 * n_modes), Vec::Zero(2 * n_modes)};
  }

  static SymplecticTransform displacement(Vec d) {
    const auto dim = d.size();
    return {Mat::Identity(dim, dim), std::move(d)};
  }
};

/// Vacuum: zero mean, identity covariance.
inline GaussianState vacuum_state(int n_modes) {
  if (n_modes < 1) {
    throw std::invalid_argument("vacuum_state: n_modes must be >= 1");
  }
  return {Vec::Zero(2 * n_modes), Mat::Identity(2 * n_modes, 2 * n_modes)};
}

/// Product of coherent states, one per amplitude.
inline GaussianState coherent_state(const std::vector<CoherentAmplitude>& amps) {
  if (amps.empty()) {
    throw std::invalid_argument("coherent_state: amplitude list must be non-empty");
  }
  const int n = static_cast<int>(amps.size());
  Vec mean = Vec::Zero(2 * n);
  for (int k = 0; k < n; ++k) {
    mean(2 * k) = amps[k].x_mean;
    mean(2 * k + 1) = amps[k].p_mean;
  }
  return {std::move(mean), Mat::Identity(2 * n, 2 * n)};
}

/// Two-mode beam splitter of transmissivity t between modes i and j,
/// embedded in an n_modes transform.  Convention (real orthogonal, zero
/// phase):
///   x_i' = sqrt(t) x_i + sqrt(1-t) x_j
///   x_j' = sqrt(1-t) x_i - sqrt(t) x_j
/// and identically for p.
inline SymplecticTransform beam_splitter(int n_modes, int i, int j, double t) {
  if (i == j) {
    throw std::invalid_argument("beam_splitter: modes must differ");
  }
  if (i < 0 || j < 0 || i >= n_modes || j >= n_modes) {
    throw std::invalid_argument("beam_splitter: mode index out of range");
  }
  if (!(t >= 0.0 && t <= 1.0)) {
    throw std::invalid_argument("beam_splitter: transmissivity " + std::to_string(t) +
                                " outside [0, 1]");
  }
  const double ct = std::sqrt(t);
  const double st = std::sqrt(1.0 - t);
  Mat s = Mat::Identity(2 * n_modes, 2 * n_modes);
  for (int q = 0; q < 2; ++q) {  // q = 0 for x rows, 1 for p rows
    const int a = 2 * i + q;
    const int b = 2 * j + q;
    s(a, a) = ct;
    s(a, b) = st;
    s(b, a) = st;
    s(b, b) = -ct;
  }
  return {std::move(s), Vec::Zero(2 * n_modes)};
}

/// Phase-space rotation of one mode by theta.
inline SymplecticTransform phase_shift(int n_modes, int mode, double theta) {
  if (mode < 0 || mode >= n_modes) {
    throw std::invalid_argument("phase_shift: mode index out of range");
  }
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  Mat m = Mat::Identity(2 * n_modes, 2 * n_modes);
  m(2 * mode, 2 * mode) = c;
  m(2 * mode, 2 * mode + 1) = s;
  m(2 * mode + 1, 2 * mode) = -s;
  m(2 * mode + 1, 2 * mode + 1) = c;
  return {std::move(m), Vec::Zero(2 * n_modes)};
}

/// Single-mode squeezer diag(e^r, e^-r); only needed to exercise
/// physicality checks on non-coherent states.
inline SymplecticTransform squeeze(int n_modes, int mode, double r) {
  if (mode < 0 || mode >= n_modes) {
    throw std::invalid_argument("squeeze: mode index out of range");
  }
  Mat m = Mat::Identity(2 * n_modes, 2 * n_modes);
  m(2 * mode, 2 * mode) = std::exp(r);
  m(2 * mode + 1, 2 * mode + 1) = std::exp(-r);
  return {std::move(m), Vec::Zero(2 * n_modes)};
}

/// mean' = S mean + d, cov' = S cov S^T.
inline GaussianState apply(const GaussianState& state, const SymplecticTransform& transform) {
  if (transform.n_modes() != state.n_modes()) {
    throw std::invalid_argument("apply: transform acts on " +
                                std::to_string(transform.n_modes()) + " modes, state has " +
                                std::to_string(state.n_modes()));
  }
  Vec mean = transform.S * state.mean() + transform.d;
  Mat cov = transform.S * state.cov() * transform.S.transpose();
  return {std::move(mean), std::move(cov)};
}

/// Adds diag(lambda_x, lambda_p) to one mode's covariance block; the mean
/// and all cross-mode covariances are untouched (uncorrelated noise).
inline GaussianState additive_noise(const GaussianState& state, int mode,
                                    const NoiseChannel& channel) {
  state.check_mode(mode);
  Mat cov = state.cov();
  cov(2 * mode, 2 * mode) += channel.lambda_x;
  cov(2 * mode + 1, 2 * mode + 1) += channel.lambda_p;
  return {state.mean(), std::move(cov)};
}

/// Pure-loss channel of transmissivity eta on one mode: the mode's mean
/// scales by sqrt(eta), its covariance block by eta (plus (1-eta) vacuum),
/// and cross-covariances with other modes by sqrt(eta).
inline GaussianState loss_channel(const GaussianState& state, int mode, double eta) {
  state.check_mode(mode);
  if (!(eta > 0.0 && eta <= 1.0)) {
    throw std::invalid_argument("loss_channel: eta " + std::to_string(eta) +
                                " outside (0, 1]");
  }
  const int dim = 2 * state.n_modes();
  Vec scale = Vec::Ones(dim);
  scale(2 * mode) = std::sqrt(eta);
  scale(2 * mode + 1) = std::sqrt(eta);
  Vec mean = state.mean().cwiseProduct(scale);
  Mat cov = scale.asDiagonal() * state.cov() * scale.asDiagonal();
  cov(2 * mode, 2 * mode) += 1.0 - eta;
  cov(2 * mode + 1, 2 * mode + 1) += 1.0 - eta;
  return {std::move(mean), std::move(cov)};
}

/// Restriction of the state to the kept modes (discards the rest).
inline GaussianState partial_trace(const GaussianState& state, std::vector<int> keep) {
  if (keep.empty()) {
    throw std::invalid_argument("partial_trace: keep set must be non-empty");
  }
  std::sort(keep.begin(), keep.end());
  keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
  for (int mode : keep) {
    state.check_mode(mode);
  }
  const int n = static_cast<int>(keep.size());
  Vec mean(2 * n);
  Mat cov(2 * n, 2 * n);
  for (int a = 0; a < n; ++a) {
    mean(2 * a) = state.mean()(2 * keep[a]);
    mean(2 * a + 1) = state.mean()(2 * keep[a] + 1);
    for (int b = 0; b < n; ++b) {
      cov.block<2, 2>(2 * a, 2 * b) = state.cov().block<2, 2>(2 * keep[a], 2 * keep[b]);
    }
  }
  return {std::move(mean), std::move(cov)};
}

/// Tensors extra vacuum modes onto the end of the state.
inline GaussianState append_vacuum(const GaussianState& state, int extra_modes) {
  if (extra_modes < 1) {
    throw std::invalid_argument("append_vacuum: extra_modes must be >= 1");
  }
  const int dim = 2 * state.n_modes();
  const int ext = 2 * extra_modes;
  Vec mean = Vec::Zero(dim + ext);
  mean.head(dim) = state.mean();
  Mat cov = Mat::Identity(dim + ext, dim + ext);
  cov.topLeftCorner(dim, dim) = state.cov();
  return {std::move(mean), std::move(cov)};
}

}  // namespace cvpurify
