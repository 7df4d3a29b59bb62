#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sssm/common.hpp"

namespace sssm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kSymTol = 1e-9;
inline constexpr double kProbClamp = 1e-12;
inline constexpr double kMaxCondition = 1e12;

inline double clamp_probability(double p) {
  return std::clamp(p, kProbClamp, 1.0 - kProbClamp);
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + e^x) without overflow.
inline double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

inline bool is_symmetric(const MatrixXd& m, double tol = kSymTol) {
  if (m.rows() != m.cols()) return false;
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol;
}

inline bool is_psd(const MatrixXd& m, double tol = kSymTol) {
  if (m.size() == 0) return true;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m, Eigen::EigenvaluesOnly);
  const double max_ev = es.eigenvalues().maxCoeff();
  return es.eigenvalues().minCoeff() >= -tol * std::max(max_ev, 1.0);
}

struct GaussianBelief {
  VectorXd mean;
  MatrixXd cov;

  GaussianBelief() = default;
  GaussianBelief(VectorXd m, MatrixXd c) : mean(std::move(m)), cov(std::move(c)) {}

  Eigen::Index dim() const { return mean.size(); }

  void check_valid() const {
    if (cov.rows() != mean.size() || cov.cols() != mean.size())
      throw std::invalid_argument("GaussianBelief: dimension mismatch");
    if (!is_symmetric(cov))
      throw std::invalid_argument("GaussianBelief: covariance not symmetric");
    if (!is_psd(cov))
      throw std::invalid_argument("GaussianBelief: covariance not PSD");
  }
};

struct LdsParams {
  MatrixXd A;  // state transition, M x M
  MatrixXd B;  // observation, My x M
  MatrixXd Q;  // process noise, M x M
  MatrixXd R;  // observation noise, My x My

  Eigen::Index state_dim() const { return A.rows(); }
  Eigen::Index obs_dim() const { return B.rows(); }

  void check_valid() const {
    const Eigen::Index m = A.rows();
    const Eigen::Index my = B.rows();
    if (A.cols() != m || B.cols() != m || Q.rows() != m || Q.cols() != m ||
        R.rows() != my || R.cols() != my)
      throw std::invalid_argument("LdsParams: inconsistent dimensions");
    if (!is_symmetric(Q) || !is_psd(Q))
      throw std::invalid_argument("LdsParams: Q not symmetric PSD");
    if (!is_symmetric(R) || !is_psd(R))
      throw std::invalid_argument("LdsParams: R not symmetric PSD");
  }
};

namespace detail {

inline void check_invertible(const MatrixXd& s, const char* where) {
  if (s.size() == 0) return;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(s, Eigen::EigenvaluesOnly);
  const double max_ev = es.eigenvalues().maxCoeff();
  const double min_ev = es.eigenvalues().minCoeff();
  if (!(min_ev > 0.0) || max_ev / min_ev > kMaxCondition)
    throw SingularCovarianceError(std::string(where) +
                                  ": covariance is singular or ill-conditioned");
}

}  // namespace detail

// log N(x; mean, cov).  Zero-dimensional Gaussians integrate to 1.
inline double log_gaussian(const VectorXd& x, const VectorXd& mean,
                           const MatrixXd& cov) {
  const Eigen::Index n = x.size();
  if (n == 0) return 0.0;
  detail::check_invertible(cov, "log_gaussian");
  const Eigen::LLT<MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw SingularCovarianceError("log_gaussian: Cholesky failed");
  const VectorXd diff = x - mean;
  const VectorXd alpha = llt.matrixL().solve(diff);
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    log_det += std::log(llt.matrixL()(i, i));
  return -0.5 * alpha.squaredNorm() - log_det -
         0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

// One predict-then-update Kalman step.  Returns the filtered belief and the
// log predictive evidence log N(y; B A mean, B (A cov A' + Q) B' + R).
inline std::pair<GaussianBelief, double> kalman_step(const GaussianBelief& prior,
                                                     const VectorXd& y,
                                                     const LdsParams& lds) {
  if (prior.dim() != lds.state_dim() || y.size() != lds.obs_dim())
    throw std::invalid_argument("kalman_step: dimension mismatch");

  const VectorXd mean_pred = lds.A * prior.mean;
  const MatrixXd cov_pred =
      lds.A * prior.cov * lds.A.transpose() + lds.Q;
  const MatrixXd innov_cov =
      lds.B * cov_pred * lds.B.transpose() + lds.R;
  detail::check_invertible(innov_cov, "kalman_step");

  const double log_evidence = log_gaussian(y, lds.B * mean_pred, innov_cov);

  const MatrixXd gain =
      cov_pred * lds.B.transpose() * innov_cov.inverse();
  GaussianBelief post;
  post.mean = mean_pred + gain * (y - lds.B * mean_pred);
  MatrixXd cov =
      (MatrixXd::Identity(cov_pred.rows(), cov_pred.cols()) - gain * lds.B) *
      cov_pred;
  post.cov = 0.5 * (cov + cov.transpose());
  return {std::move(post), log_evidence};
}

// Combines a belief over x_{t-1} with the one-step-ahead observation density
// p(y | x_{t-1}) = N(y; BA x_{t-1}, BQB' + R) into c3 * N(x_{t-1}; mu, Sigma).
// log_c3 is computed via the marginal-likelihood identity, which avoids the
// determinant ratios of near-singular matrices in the literal product form.
inline std::pair<GaussianBelief, double> condition_previous_state(
    const GaussianBelief& chi, const VectorXd& y, const LdsParams& lds) {
  if (chi.dim() != lds.state_dim() || y.size() != lds.obs_dim())
    throw std::invalid_argument("condition_previous_state: dimension mismatch");

  const MatrixXd ba = lds.B * lds.A;
  const MatrixXd sigma_y = lds.B * lds.Q * lds.B.transpose() + lds.R;
  detail::check_invertible(sigma_y, "condition_previous_state");

  const MatrixXd innov_cov = ba * chi.cov * ba.transpose() + sigma_y;
  detail::check_invertible(innov_cov, "condition_previous_state");
  const double log_c3 = log_gaussian(y, ba * chi.mean, innov_cov);

  // Kalman-gain form of the information-domain update; exact for a point
  // prior (Sigma_X = 0) where the inverse of Sigma_X does not exist.
  const MatrixXd gain = chi.cov * ba.transpose() * innov_cov.inverse();
  GaussianBelief post;
  post.mean = chi.mean + gain * (y - ba * chi.mean);
  MatrixXd cov =
      (MatrixXd::Identity(chi.dim(), chi.dim()) - gain * ba) * chi.cov;
  post.cov = 0.5 * (cov + cov.transpose());
  return {std::move(post), log_c3};
}

// Lower-triangular L with L L' = S.  Cholesky with diagonal jitter
// escalation (1e-12, 1e-10, 1e-8) when the plain factorization fails.
inline MatrixXd psd_sqrt(const MatrixXd& s) {
  if (!is_symmetric(s)) throw std::invalid_argument("psd_sqrt: not symmetric");
  if (!is_psd(s)) throw std::invalid_argument("psd_sqrt: indefinite input");
  if (s.size() == 0) return s;
  if (s.cwiseAbs().maxCoeff() == 0.0) return MatrixXd::Zero(s.rows(), s.cols());

  const double jitters[] = {0.0, 1e-12, 1e-10, 1e-8};
  for (double j : jitters) {
    MatrixXd sj = s;
    sj.diagonal().array() += j;
    Eigen::LLT<MatrixXd> llt(sj);
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  throw std::runtime_error("psd_sqrt: Cholesky failed after jitter escalation");
}

// The 2M+1 unscented-transform points x0 = mu, x_k = mu +/- column k of
// sqrt(M * Sigma).
inline std::vector<VectorXd> sigma_points(const GaussianBelief& g) {
  const Eigen::Index m = g.dim();
  const MatrixXd root = psd_sqrt(static_cast<double>(m) * g.cov);
  std::vector<VectorXd> points;
  points.reserve(2 * static_cast<std::size_t>(m) + 1);
  points.push_back(g.mean);
  for (Eigen::Index k = 0; k < m; ++k) points.push_back(g.mean + root.col(k));
  for (Eigen::Index k = 0; k < m; ++k) points.push_back(g.mean - root.col(k));
  return points;
}

// E_{x ~ g}[sigmoid(offset + w'x)], moment-matched closed form
// sigmoid((offset + w'mu) / sqrt(1 + (pi/8) w'Sigma w)).
inline double sigmoid_gaussian_expectation(double offset, const VectorXd& w,
                                           const GaussianBelief& g) {
  if (w.size() != g.dim())
    throw std::invalid_argument("sigmoid_gaussian_expectation: dim mismatch");
  const double mean_arg = offset + w.dot(g.mean);
  const double var = w.size() > 0 ? std::max(0.0, w.dot(g.cov * w)) : 0.0;
  const double scale = std::sqrt(1.0 + (std::numbers::pi / 8.0) * var);
  return clamp_probability(sigmoid(mean_arg / scale));
}

}  // namespace sssm
