#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace sssm {

inline double per_frame_accuracy(const std::vector<int>& pred,
                                 const std::vector<int>& truth) {
  if (pred.size() != truth.size() || pred.empty())
    throw std::invalid_argument("per_frame_accuracy: length mismatch");
  std::size_t hits = 0;
  for (std::size_t t = 0; t < pred.size(); ++t)
    if (pred[t] == truth[t]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

inline Eigen::MatrixXd confusion_matrix(const std::vector<int>& pred,
                                        const std::vector<int>& truth,
                                        int n_classes) {
  if (pred.size() != truth.size())
    throw std::invalid_argument("confusion_matrix: length mismatch");
  Eigen::MatrixXd cm = Eigen::MatrixXd::Zero(n_classes, n_classes);
  for (std::size_t t = 0; t < pred.size(); ++t) cm(truth[t], pred[t]) += 1.0;
  return cm;
}

inline std::vector<int> segmentation_boundaries(const std::vector<int>& labels) {
  std::vector<int> out;
  for (std::size_t t = 1; t < labels.size(); ++t)
    if (labels[t] != labels[t - 1]) out.push_back(static_cast<int>(t));
  return out;
}

// Greedy one-to-one matching of predicted to true boundaries within the
// window; unmatched boundaries on either side count at the window value.
inline double boundary_offset(const std::vector<int>& pred,
                              const std::vector<int>& truth, int window = 40) {
  if (pred.size() != truth.size())
    throw std::invalid_argument("boundary_offset: length mismatch");
  const std::vector<int> pb = segmentation_boundaries(pred);
  const std::vector<int> tb = segmentation_boundaries(truth);
  if (pb.empty() && tb.empty()) return 0.0;

  std::vector<bool> pred_used(pb.size(), false);
  double total = 0.0;
  std::size_t matched = 0;
  for (int t : tb) {
    int best = -1;
    int best_dist = window + 1;
    for (std::size_t i = 0; i < pb.size(); ++i) {
      if (pred_used[i]) continue;
      const int dist = std::abs(pb[i] - t);
      if (dist < best_dist) {
        best_dist = dist;
        best = static_cast<int>(i);
      }
    }
    if (best >= 0 && best_dist <= window) {
      pred_used[best] = true;
      total += best_dist;
      ++matched;
    } else {
      total += window;  // missed true boundary
    }
  }
  for (std::size_t i = 0; i < pb.size(); ++i)
    if (!pred_used[i]) total += window;  // spurious predicted boundary
  const double n = static_cast<double>(tb.size() + pb.size() - matched);
  return n > 0.0 ? total / n : 0.0;
}

}  // namespace sssm
