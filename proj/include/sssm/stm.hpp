#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sssm/common.hpp"

namespace sssm {

using TransitionMatrix = Eigen::MatrixXd;  // N_Z x N_Z, row-stochastic
using StageMatrix = Eigen::MatrixXd;       // N_Q x N_Q, row-stochastic
using TransitionCounts = Eigen::MatrixXd;  // N_Z x N_Z, nonnegative

inline constexpr double kRowSumTol = 1e-9;
inline constexpr double kBlockTol = 1e-6;

inline bool is_row_stochastic(const Eigen::MatrixXd& m, double tol = kRowSumTol) {
  if (m.minCoeff() < 0.0) return false;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    if (std::abs(m.row(i).sum() - 1.0) > tol) return false;
  return true;
}

// Surjective map from primitive index to stage index (both 0-based).
struct StageMap {
  int n_primitives = 0;
  int n_stages = 0;
  std::vector<int> g;  // g[primitive] = stage

  void check_valid() const {
    if (static_cast<int>(g.size()) != n_primitives || n_stages < 1)
      throw std::invalid_argument("StageMap: bad sizes");
    std::vector<bool> hit(n_stages, false);
    for (int s : g) {
      if (s < 0 || s >= n_stages)
        throw std::invalid_argument("StageMap: stage index out of range");
      hit[s] = true;
    }
    for (bool h : hit)
      if (!h) throw std::invalid_argument("StageMap: map not surjective");
  }

  // G(q): primitives belonging to stage q.
  std::vector<int> block(int q) const {
    std::vector<int> out;
    for (int i = 0; i < n_primitives; ++i)
      if (g[i] == q) out.push_back(i);
    return out;
  }

  int terminal_stage() const { return n_stages - 1; }
};

inline TransitionCounts count_transitions(
    const std::vector<std::vector<int>>& sequences, int n_primitives) {
  TransitionCounts xi = TransitionCounts::Zero(n_primitives, n_primitives);
  for (const auto& seq : sequences) {
    for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
      const int a = seq[t], b = seq[t + 1];
      if (a < 0 || a >= n_primitives || b < 0 || b >= n_primitives)
        throw std::invalid_argument("count_transitions: symbol out of range");
      xi(a, b) += 1.0;
    }
  }
  return xi;
}

// Sparse negative-Dirichlet MAP: theta_ij = max(xi_ij - alpha, 0) / row sum.
// A row entirely below the penalty falls back to uniform.
inline TransitionMatrix estimate_sparse_map(const TransitionCounts& xi,
                                            double alpha,
                                            WarningLog* log = nullptr) {
  if (alpha < 0.0) throw std::invalid_argument("estimate_sparse_map: alpha < 0");
  TransitionMatrix theta(xi.rows(), xi.cols());
  for (Eigen::Index i = 0; i < xi.rows(); ++i) {
    Eigen::VectorXd row = (xi.row(i).transpose().array() - alpha).cwiseMax(0.0);
    const double total = row.sum();
    if (total > 0.0) {
      theta.row(i) = row.transpose() / total;
    } else {
      warn(log, "estimate_sparse_map: all counts in row " + std::to_string(i) +
                    " below penalty, falling back to uniform");
      theta.row(i).setConstant(1.0 / static_cast<double>(xi.cols()));
    }
  }
  return theta;
}

// Ordered negative-Dirichlet penalty mask: alpha everywhere except the
// diagonal (stay) and first superdiagonal (advance).
inline Eigen::MatrixXd build_alpha_mask(int n_stages, double alpha) {
  if (n_stages < 1) throw std::invalid_argument("build_alpha_mask: n_stages < 1");
  Eigen::MatrixXd mask = Eigen::MatrixXd::Constant(n_stages, n_stages, alpha);
  for (int q = 0; q < n_stages; ++q) {
    mask(q, q) = 0.0;
    if (q + 1 < n_stages) mask(q, q + 1) = 0.0;
  }
  return mask;
}

// phi_qr = sum over j in G(r) of theta_ij for any representative i in G(q);
// throws if rows within a stage disagree beyond tolerance.
inline StageMatrix stage_marginal(const TransitionMatrix& theta,
                                  const StageMap& stages) {
  stages.check_valid();
  if (theta.rows() != stages.n_primitives || theta.cols() != stages.n_primitives)
    throw std::invalid_argument("stage_marginal: theta size mismatch");
  StageMatrix phi = StageMatrix::Zero(stages.n_stages, stages.n_stages);
  for (int q = 0; q < stages.n_stages; ++q) {
    const auto rows = stages.block(q);
    for (int r = 0; r < stages.n_stages; ++r) {
      const auto cols = stages.block(r);
      double ref = 0.0;
      for (std::size_t k = 0; k < rows.size(); ++k) {
        double sum = 0.0;
        for (int j : cols) sum += theta(rows[k], j);
        if (k == 0) {
          ref = sum;
        } else if (std::abs(sum - ref) > kBlockTol) {
          throw std::invalid_argument(
              "stage_marginal: block consistency violated for stages (" +
              std::to_string(q) + "," + std::to_string(r) + ")");
        }
      }
      phi(q, r) = ref;
    }
  }
  return phi;
}

// Block-wise sparse MAP estimate: stage matrix from thresholded aggregated
// counts, primitive rows proportional to counts within each surviving block.
inline std::pair<TransitionMatrix, StageMatrix> estimate_blockwise_map(
    const TransitionCounts& xi, const StageMap& stages, double alpha,
    WarningLog* log = nullptr) {
  stages.check_valid();
  if (xi.rows() != stages.n_primitives || xi.cols() != stages.n_primitives)
    throw std::invalid_argument("estimate_blockwise_map: xi size mismatch");
  if (xi.minCoeff() < 0.0)
    throw std::invalid_argument("estimate_blockwise_map: negative counts");

  const int nq = stages.n_stages;
  const int nz = stages.n_primitives;
  const Eigen::MatrixXd mask = build_alpha_mask(nq, alpha);

  // Stage-aggregated counts.
  Eigen::MatrixXd agg = Eigen::MatrixXd::Zero(nq, nq);
  for (int i = 0; i < nz; ++i)
    for (int j = 0; j < nz; ++j) agg(stages.g[i], stages.g[j]) += xi(i, j);

  StageMatrix phi(nq, nq);
  for (int q = 0; q < nq; ++q) {
    Eigen::VectorXd row =
        (agg.row(q).transpose() - mask.row(q).transpose()).cwiseMax(0.0);
    const double total = row.sum();
    if (total > 0.0) {
      phi.row(q) = row.transpose() / total;
    } else {
      warn(log, "estimate_blockwise_map: stage row " + std::to_string(q) +
                    " has no surviving counts, falling back to stay/advance");
      phi.row(q).setZero();
      if (q + 1 < nq) {
        phi(q, q) = 0.5;
        phi(q, q + 1) = 0.5;
      } else {
        phi(q, q) = 1.0;
      }
    }
  }

  TransitionMatrix theta = TransitionMatrix::Zero(nz, nz);
  for (int i = 0; i < nz; ++i) {
    const int q = stages.g[i];
    for (int r = 0; r < nq; ++r) {
      const double mass = phi(q, r);
      if (mass == 0.0) continue;
      const auto cols = stages.block(r);
      double denom = 0.0;
      for (int j : cols) denom += xi(i, j);
      if (denom > 0.0) {
        for (int j : cols) theta(i, j) = mass * xi(i, j) / denom;
      } else {
        warn(log, "estimate_blockwise_map: primitive " + std::to_string(i) +
                      " has no counts into stage " + std::to_string(r) +
                      ", distributing uniformly within block");
        for (int j : cols) theta(i, j) = mass / static_cast<double>(cols.size());
      }
    }
  }
  return {std::move(theta), std::move(phi)};
}

// Constrained MAP objective L(Theta) = sum xi_ij log theta_ij
//                                    - sum_{penalized q,r} alpha log phi_qr
// with phi derived from theta via stage_marginal.
//
// Zero probabilities hit log 0; the value is defined as the limit along
// phi -> 0, which is +inf when the penalty rate exceeds the count rate
// vanishing with it, and -inf in the opposite case.  Terms with zero
// coefficient contribute nothing.
inline double map_objective(const TransitionMatrix& theta,
                             const TransitionCounts& xi, const StageMap& stages,
                             double alpha) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const StageMatrix phi = stage_marginal(theta, stages);
  const Eigen::MatrixXd mask = build_alpha_mask(stages.n_stages, alpha);

  double finite = 0.0;
  double pos_rate = 0.0;  // coefficient mass on -alpha log(0) terms
  double neg_rate = 0.0;  // coefficient mass on xi log(0) terms

  for (int i = 0; i < stages.n_primitives; ++i) {
    for (int j = 0; j < stages.n_primitives; ++j) {
      if (xi(i, j) == 0.0) continue;
      if (theta(i, j) > 0.0)
        finite += xi(i, j) * std::log(theta(i, j));
      else
        neg_rate += xi(i, j);
    }
  }
  for (int q = 0; q < stages.n_stages; ++q) {
    for (int r = 0; r < stages.n_stages; ++r) {
      if (mask(q, r) == 0.0) continue;
      if (phi(q, r) > 0.0)
        finite -= mask(q, r) * std::log(phi(q, r));
      else
        pos_rate += mask(q, r);
    }
  }
  if (neg_rate > pos_rate) return -inf;
  if (pos_rate > neg_rate) return inf;
  return finite;
}

}  // namespace sssm
