#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "sssm/model.hpp"
#include "sssm/rng.hpp"

namespace testutil {

inline Eigen::MatrixXd random_psd(sssm::Rng& rng, int n, double jitter = 1e-6) {
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = rng.gaussian();
  return m * m.transpose() + jitter * Eigen::MatrixXd::Identity(n, n);
}

inline Eigen::MatrixXd random_row_stochastic(sssm::Rng& rng, int rows,
                                             int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    double total = 0.0;
    for (int j = 0; j < cols; ++j) {
      m(i, j) = -std::log(1.0 - rng.uniform());
      total += m(i, j);
    }
    m.row(i) /= total;
  }
  return m;
}

inline double log_gaussian_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (std::log(2.0 * M_PI * var) + d * d / var);
}

// Single action, single primitive, single stage; scalar AR(1) state.
inline sssm::FullModel trivial_model(double a = 0.9, double q = 0.1,
                                     double r = 0.05, double nu = 1.0,
                                     double beta = 8.0) {
  sssm::FullModel m;
  m.n_actions = 1;
  sssm::SubstructureModel sub;
  sub.theta = Eigen::MatrixXd::Ones(1, 1);
  sub.stages.n_primitives = 1;
  sub.stages.n_stages = 1;
  sub.stages.g = {0};
  sub.init_primitive = Eigen::VectorXd::Ones(1);
  m.actions = {sub};
  sssm::LdsParams lds;
  lds.A = Eigen::MatrixXd::Constant(1, 1, a);
  lds.B = Eigen::MatrixXd::Identity(1, 1);
  lds.Q = Eigen::MatrixXd::Constant(1, 1, q);
  lds.R = Eigen::MatrixXd::Constant(1, 1, r);
  m.lds = {{lds}};
  m.duration.nu = Eigen::VectorXd::Constant(1, nu);
  m.duration.beta = Eigen::VectorXd::Constant(1, beta);
  m.duration.omega = {{Eigen::VectorXd::Zero(1)}};
  m.transition.a = Eigen::MatrixXd::Ones(1, 1);
  m.init_action = Eigen::VectorXd::Ones(1);
  m.init_state.mean = Eigen::VectorXd::Zero(1);
  m.init_state.cov = Eigen::MatrixXd::Identity(1, 1);
  return m;
}

}  // namespace testutil
