#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sssm/common.hpp"
#include "sssm/gaussian.hpp"
#include "sssm/stm.hpp"

namespace sssm {

inline constexpr double kLogisticRidge = 1e-4;

// Logistic duration parameters (nu, beta per action) plus the discriminative
// boundary weights omega per (action, primitive).  An empty omega vector is
// treated as zero weights.
struct DurationParams {
  Eigen::VectorXd nu;    // per action, > 0
  Eigen::VectorXd beta;  // per action, > 0 (frames)
  std::vector<std::vector<Eigen::VectorXd>> omega;  // [action][primitive]

  int n_actions() const { return static_cast<int>(nu.size()); }

  const Eigen::VectorXd& omega_at(int action, int primitive) const {
    static const Eigen::VectorXd empty;
    if (action < 0 || action >= static_cast<int>(omega.size())) return empty;
    const auto& per_action = omega[action];
    if (primitive < 0 || primitive >= static_cast<int>(per_action.size()))
      return empty;
    return per_action[primitive];
  }

  void check_valid() const {
    if (nu.size() != beta.size())
      throw std::invalid_argument("DurationParams: nu/beta size mismatch");
    if (nu.size() > 0 && (nu.minCoeff() <= 0.0 || beta.minCoeff() <= 0.0))
      throw std::invalid_argument("DurationParams: nu and beta must be positive");
  }
};

struct ActionTransition {
  Eigen::MatrixXd a;  // N_S x N_S, row-stochastic

  int n_actions() const { return static_cast<int>(a.rows()); }

  void check_valid() const {
    if (a.rows() != a.cols() || !is_row_stochastic(a))
      throw std::invalid_argument("ActionTransition: not row-stochastic");
  }
};

// One training observation for the boundary model at a single frame.
struct BoundaryTrainingTuple {
  int action = 0;
  int duration = 1;
  double reset_label = 0.0;         // b = p(D_{t+1} = 1), hard 0/1 in training
  double primitive_posterior = 1.0; // p_Z
  GaussianBelief state_posterior;   // (mu, Sigma)
};

// p(D_{t+1}=1 | action, primitive, duration, x).  Zero unless the primitive
// lies in the terminal stage; otherwise sigmoid(nu (d - beta) + omega'x).
inline double reset_probability(int action, int primitive, int duration,
                                const Eigen::VectorXd& x,
                                const DurationParams& params,
                                const StageMap& stages) {
  if (duration < 1) throw std::invalid_argument("reset_probability: duration < 1");
  if (stages.g.at(primitive) != stages.terminal_stage()) return 0.0;
  const Eigen::VectorXd& w = params.omega_at(action, primitive);
  const double wx = w.size() > 0 ? w.dot(x) : 0.0;
  return sigmoid(params.nu[action] * (duration - params.beta[action]) + wx);
}

// p(dur = tau) for tau = 1..tau_max, computed in log domain with a running
// prefix sum of log-survival terms.
inline Eigen::VectorXd duration_pmf(double nu, double beta, int tau_max) {
  if (!(nu > 0.0)) throw std::invalid_argument("duration_pmf: nu must be > 0");
  if (tau_max < 1) throw std::invalid_argument("duration_pmf: tau_max < 1");
  Eigen::VectorXd pmf(tau_max);
  double log_survival = 0.0;  // sum_{d=1}^{tau} -log(1 + e^{nu(d-beta)})
  for (int tau = 1; tau <= tau_max; ++tau) {
    const double a = nu * (tau - beta);
    log_survival -= softplus(a);
    pmf[tau - 1] = std::exp(log_survival + a);
  }
  return pmf;
}

// Maximizes sum_n w_n [b_n log s_n + (1-b_n) log(1-s_n)] - ridge/2 |omega|^2
// with s_n = sigmoid(c_n + omega'x_n), via Newton iterations.
inline Eigen::VectorXd weighted_logistic_regression(
    const std::vector<Eigen::VectorXd>& features,
    const std::vector<double>& offsets, const std::vector<double>& labels,
    const std::vector<double>& weights, double ridge = kLogisticRidge,
    WarningLog* log = nullptr) {
  const std::size_t n = features.size();
  if (offsets.size() != n || labels.size() != n || weights.size() != n || n == 0)
    throw std::invalid_argument("weighted_logistic_regression: size mismatch");
  const Eigen::Index dim = features[0].size();
  double weight_total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!features[i].allFinite() || !std::isfinite(offsets[i]) ||
        !std::isfinite(labels[i]) || !std::isfinite(weights[i]))
      throw std::invalid_argument("weighted_logistic_regression: non-finite input");
    if (weights[i] < 0.0)
      throw std::invalid_argument("weighted_logistic_regression: negative weight");
    weight_total += weights[i];
  }
  if (weight_total <= 0.0)
    throw std::invalid_argument("weighted_logistic_regression: all weights zero");

  Eigen::VectorXd w = Eigen::VectorXd::Zero(dim);
  for (int iter = 0; iter < 100; ++iter) {
    Eigen::VectorXd grad = -ridge * w;
    Eigen::MatrixXd hess = ridge * Eigen::MatrixXd::Identity(dim, dim);
    for (std::size_t i = 0; i < n; ++i) {
      if (weights[i] == 0.0) continue;
      const double s = sigmoid(offsets[i] + w.dot(features[i]));
      grad += weights[i] * (labels[i] - s) * features[i];
      const double curv = std::max(s * (1.0 - s), 1e-12);
      hess += weights[i] * curv * features[i] * features[i].transpose();
    }
    const Eigen::VectorXd step = hess.ldlt().solve(grad);
    w += step;
    if (w.norm() > 1e3) {
      warn(log, "weighted_logistic_regression: weights escaping, likely "
                "separation; returning ridge-limited solution");
      break;
    }
    if (step.norm() < 1e-8) break;
  }
  return w;
}

// Reconstructs the duration counter from per-frame action labels:
// D_1 = 1, resets to 1 at label changes, otherwise increments.
inline std::vector<int> reconstruct_durations(const std::vector<int>& labels) {
  std::vector<int> d(labels.size());
  for (std::size_t t = 0; t < labels.size(); ++t)
    d[t] = (t > 0 && labels[t] == labels[t - 1]) ? d[t - 1] + 1 : 1;
  return d;
}

// Fits (nu_i, beta_i) by logistic regression of reset indicators on duration,
// and the action transition matrix from boundary counts.  omega is left empty
// (zero); the caller sizes it once the state dimension is known.
inline std::pair<DurationParams, ActionTransition> fit_logistic_duration(
    const std::vector<std::vector<int>>& label_sequences, int n_actions,
    WarningLog* log = nullptr) {
  if (n_actions < 1)
    throw std::invalid_argument("fit_logistic_duration: n_actions < 1");

  std::vector<std::vector<double>> durations(n_actions), resets(n_actions);
  std::vector<std::vector<double>> segment_lengths(n_actions);
  Eigen::MatrixXd boundary_counts = Eigen::MatrixXd::Zero(n_actions, n_actions);

  for (const auto& labels : label_sequences) {
    if (labels.empty())
      throw std::invalid_argument("fit_logistic_duration: empty sequence");
    const auto d = reconstruct_durations(labels);
    for (std::size_t t = 0; t + 1 < labels.size(); ++t) {
      const int i = labels[t];
      if (i < 0 || i >= n_actions)
        throw std::invalid_argument("fit_logistic_duration: label out of range");
      const bool reset = labels[t + 1] != labels[t];
      durations[i].push_back(static_cast<double>(d[t]));
      resets[i].push_back(reset ? 1.0 : 0.0);
      if (reset) boundary_counts(i, labels[t + 1]) += 1.0;
    }
    // Segment lengths (including the trailing, possibly censored segment).
    std::size_t start = 0;
    for (std::size_t t = 1; t <= labels.size(); ++t) {
      if (t == labels.size() || labels[t] != labels[t - 1]) {
        segment_lengths[labels[start]].push_back(static_cast<double>(t - start));
        start = t;
      }
    }
  }

  DurationParams params;
  params.nu.resize(n_actions);
  params.beta.resize(n_actions);
  params.omega.assign(n_actions, {});
  for (int i = 0; i < n_actions; ++i) {
    const bool any_boundary =
        !resets[i].empty() &&
        *std::max_element(resets[i].begin(), resets[i].end()) > 0.0;
    if (!any_boundary) {
      const double mean_len =
          segment_lengths[i].empty()
              ? 1.0
              : Eigen::Map<const Eigen::VectorXd>(segment_lengths[i].data(),
                                                  segment_lengths[i].size())
                    .mean();
      warn(log, "fit_logistic_duration: action " + std::to_string(i) +
                    " has no observed boundary, using defaults");
      params.nu[i] = 0.5;
      params.beta[i] = std::max(mean_len, 1.0);
      continue;
    }
    // Augmented feature (1, d); slope = nu, intercept = -nu * beta.
    std::vector<Eigen::VectorXd> feats(durations[i].size());
    std::vector<double> offs(durations[i].size(), 0.0);
    std::vector<double> wts(durations[i].size(), 1.0);
    for (std::size_t k = 0; k < durations[i].size(); ++k)
      feats[k] = (Eigen::VectorXd(2) << 1.0, durations[i][k]).finished();
    const Eigen::VectorXd w =
        weighted_logistic_regression(feats, offs, resets[i], wts,
                                     kLogisticRidge, log);
    double nu = w[1];
    if (nu <= 0.0) {
      warn(log, "fit_logistic_duration: non-positive slope for action " +
                    std::to_string(i) + ", clamping");
      nu = 1e-3;
    }
    params.nu[i] = nu;
    double beta = -w[0] / nu;
    if (beta <= 0.0) {
      warn(log, "fit_logistic_duration: non-positive beta for action " +
                    std::to_string(i) + ", clamping");
      beta = 1.0;
    }
    params.beta[i] = beta;
  }

  ActionTransition trans;
  trans.a.resize(n_actions, n_actions);
  for (int i = 0; i < n_actions; ++i) {
    const double total = boundary_counts.row(i).sum();
    if (total > 0.0) {
      trans.a.row(i) = boundary_counts.row(i) / total;
    } else {
      warn(log, "fit_logistic_duration: no boundaries out of action " +
                    std::to_string(i) + ", using uniform transition row");
      trans.a.row(i).setConstant(1.0 / n_actions);
    }
  }
  return {std::move(params), std::move(trans)};
}

// Expands each tuple into 2M+1 sigma-point rows with fixed offset
// c = nu (d - beta) and weight p_Z / (2M+1), then solves the weighted
// logistic regression for omega.
inline Eigen::VectorXd fit_dbm_omega(
    const std::vector<BoundaryTrainingTuple>& tuples, int action,
    const DurationParams& params, WarningLog* log = nullptr) {
  if (tuples.empty())
    throw std::invalid_argument("fit_dbm_omega: no training tuples");
  std::vector<Eigen::VectorXd> feats;
  std::vector<double> offs, labels, wts;
  for (const auto& tup : tuples) {
    if (tup.action != action) continue;
    const auto points = sigma_points(tup.state_posterior);
    const double c = params.nu[action] * (tup.duration - params.beta[action]);
    const double w = tup.primitive_posterior / static_cast<double>(points.size());
    for (const auto& x : points) {
      feats.push_back(x);
      offs.push_back(c);
      labels.push_back(tup.reset_label);
      wts.push_back(w);
    }
  }
  if (feats.empty())
    throw std::invalid_argument("fit_dbm_omega: no tuples for requested action");
  return weighted_logistic_regression(feats, offs, labels, wts, kLogisticRidge,
                                      log);
}

}  // namespace sssm
