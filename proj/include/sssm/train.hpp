#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sssm/common.hpp"
#include "sssm/duration.hpp"
#include "sssm/gaussian.hpp"
#include "sssm/model.hpp"
#include "sssm/rng.hpp"
#include "sssm/stm.hpp"

namespace sssm {

enum class LdsMode { kObservableState, kLatent };

struct TrainingConfig {
  int n_primitives = 5;
  int n_stages = 3;
  double alpha = -1.0;  // < 0: 10% of the action's total transition count
  int max_em_iters = 20;
  double em_tol = 1e-4;
  LdsMode lds_mode = LdsMode::kObservableState;
  bool fit_dbm = true;  // learn omega; off for the generative ablations
  std::uint64_t seed = 0;

  void check_valid() const {
    if (n_stages < 1 || n_primitives < n_stages)
      throw std::invalid_argument(
          "TrainingConfig: need n_primitives >= n_stages >= 1");
    if (lds_mode != LdsMode::kObservableState)
      throw std::invalid_argument(
          "TrainingConfig: latent LDS mode is not supported");
  }
};

struct LabeledDataset {
  // (observations, per-frame action labels) pairs.
  std::vector<std::pair<ObservationSequence, std::vector<int>>> sequences;
};

struct TrainingSummary {
  std::vector<std::vector<double>> em_curve;  // per action, per iteration
  std::vector<double> theta_sparsity;         // fraction of zero entries
};

// Per-action parameters during training (and for segment re-scoring).
struct ActionModel {
  SubstructureModel sub;
  std::vector<LdsParams> lds;
};

// ---- K-means -------------------------------------------------------------

// Lloyd iterations with k-means++ seeding; empty clusters are re-seeded from
// the farthest point.  Deterministic given seed.
inline std::vector<int> kmeans(const std::vector<Eigen::VectorXd>& vectors,
                               int k, std::uint64_t seed) {
  const int n = static_cast<int>(vectors.size());
  if (k < 1 || k > n) throw std::invalid_argument("kmeans: bad k");
  Rng rng(seed, 0x6b6d65616e73ull);

  std::vector<Eigen::VectorXd> centers;
  centers.reserve(k);
  centers.push_back(vectors[rng.categorical(Eigen::VectorXd::Ones(n))]);
  Eigen::VectorXd dist2(n);
  while (static_cast<int>(centers.size()) < k) {
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers)
        best = std::min(best, (vectors[i] - c).squaredNorm());
      dist2[i] = best;
    }
    if (dist2.sum() <= 0.0) {
      centers.push_back(vectors[rng.categorical(Eigen::VectorXd::Ones(n))]);
    } else {
      centers.push_back(vectors[rng.categorical(dist2)]);
    }
  }

  std::vector<int> assign(n, 0);
  for (int iter = 0; iter < 50; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = (vectors[i] - centers[0]).squaredNorm();
      for (int c = 1; c < k; ++c) {
        const double d = (vectors[i] - centers[c]).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    std::vector<int> counts(k, 0);
    std::vector<Eigen::VectorXd> sums(
        k, Eigen::VectorXd::Zero(vectors[0].size()));
    for (int i = 0; i < n; ++i) {
      counts[assign[i]] += 1;
      sums[assign[i]] += vectors[i];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centers[c] = sums[c] / counts[c];
      } else {
        // Re-seed from the point farthest from its center.
        int far = 0;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
          const double d = (vectors[i] - centers[assign[i]]).squaredNorm();
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        centers[c] = vectors[far];
        changed = true;
      }
    }
    if (!changed && iter > 0) break;
  }
  return assign;
}

// ---- Stage initialization -------------------------------------------------

// First and last 15% of a segment go to the starting and terminating stages;
// middle frames are split among the remaining stages (evenly between the two
// end stages when there is no middle stage).
inline std::vector<int> init_stage_split(int segment_length, int n_stages) {
  if (n_stages < 1) throw std::invalid_argument("init_stage_split: n_stages < 1");
  std::vector<int> stages(segment_length, 0);
  if (n_stages == 1 || segment_length == 0) return stages;
  if (segment_length < n_stages) {
    for (int t = 0; t < segment_length; ++t)
      stages[t] = std::min(t, n_stages - 1);
    return stages;
  }
  int edge = static_cast<int>(std::ceil(0.15 * segment_length));
  // Proportional fallback: every stage keeps at least one frame.
  while (2 * edge + std::max(n_stages - 2, 0) > segment_length && edge > 1)
    --edge;
  const int mid_begin = edge;
  const int mid_end = segment_length - edge;
  const int n_mid = mid_end - mid_begin;
  for (int t = 0; t < mid_begin; ++t) stages[t] = 0;
  for (int t = mid_end; t < segment_length; ++t) stages[t] = n_stages - 1;
  if (n_stages == 2) {
    for (int t = mid_begin; t < mid_end; ++t)
      stages[t] = (t - mid_begin) < n_mid / 2 ? 0 : 1;
  } else {
    const int n_inner = n_stages - 2;
    for (int t = mid_begin; t < mid_end; ++t) {
      int idx = n_mid > 0 ? ((t - mid_begin) * n_inner) / n_mid : 0;
      stages[t] = 1 + std::min(idx, n_inner - 1);
    }
  }
  return stages;
}

// ---- LDS estimation --------------------------------------------------------

// Observable-state fit: B = I, R = 1e-4 I, A from least squares of
// y_{t+1} on y_t, Q from residual covariance plus a small ridge.
inline LdsParams fit_lds(
    const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& pairs,
    LdsMode mode, const Eigen::MatrixXd& fallback_cov,
    WarningLog* log = nullptr) {
  if (mode != LdsMode::kObservableState)
    throw std::invalid_argument("fit_lds: latent mode not supported");
  const Eigen::Index m = fallback_cov.rows();
  LdsParams lds;
  lds.B = Eigen::MatrixXd::Identity(m, m);
  lds.R = 1e-4 * Eigen::MatrixXd::Identity(m, m);
  if (static_cast<Eigen::Index>(pairs.size()) < m + 1) {
    warn(log, "fit_lds: too few assigned pairs (" +
                  std::to_string(pairs.size()) + "), using identity fallback");
    lds.A = Eigen::MatrixXd::Identity(m, m);
    lds.Q = fallback_cov + 1e-6 * Eigen::MatrixXd::Identity(m, m);
    return lds;
  }
  Eigen::MatrixXd xtx = 1e-9 * Eigen::MatrixXd::Identity(m, m);
  Eigen::MatrixXd ytx = Eigen::MatrixXd::Zero(m, m);
  for (const auto& [prev, next] : pairs) {
    xtx += prev * prev.transpose();
    ytx += next * prev.transpose();
  }
  lds.A = ytx * xtx.inverse();
  Eigen::MatrixXd resid_cov = Eigen::MatrixXd::Zero(m, m);
  for (const auto& [prev, next] : pairs) {
    const Eigen::VectorXd r = next - lds.A * prev;
    resid_cov += r * r.transpose();
  }
  resid_cov /= static_cast<double>(pairs.size());
  lds.Q = 0.5 * (resid_cov + resid_cov.transpose()) +
          1e-6 * Eigen::MatrixXd::Identity(m, m);
  return lds;
}

// ---- Hard E-step -----------------------------------------------------------

struct AssignOptions {
  bool constrain_terminal_end = false;
  // Soft stage template (one stage per frame) used at EM iteration 0.
  const std::vector<int>* stage_template = nullptr;
  double template_match_prob = 0.8;
};

namespace detail {

// Per-frame primitive emission scores in observable-state mode:
// frame 0 scores log init_primitive, later frames log N(y_t; A y_{t-1}, Q).
inline Eigen::MatrixXd primitive_emissions(const ActionModel& am,
                                           const ObservationSequence& segment) {
  const int nz = am.sub.stages.n_primitives;
  const int len = static_cast<int>(segment.size());
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();
  Eigen::MatrixXd em(len, nz);
  for (int j = 0; j < nz; ++j)
    em(0, j) = am.sub.init_primitive[j] > 0.0
                   ? std::log(am.sub.init_primitive[j])
                   : neg_inf;
  for (int t = 1; t < len; ++t)
    for (int j = 0; j < nz; ++j)
      em(t, j) = log_gaussian(segment[t], am.lds[j].A * segment[t - 1],
                              am.lds[j].Q);
  return em;
}

inline void apply_template(Eigen::MatrixXd* em, const ActionModel& am,
                           const AssignOptions& opts) {
  if (!opts.stage_template) return;
  const int nq = am.sub.stages.n_stages;
  if (nq < 2) return;
  const double match = std::log(opts.template_match_prob);
  const double miss =
      std::log((1.0 - opts.template_match_prob) / (nq - 1));
  for (int t = 0; t < em->rows(); ++t)
    for (int j = 0; j < em->cols(); ++j)
      (*em)(t, j) +=
          am.sub.stages.g[j] == (*opts.stage_template)[t] ? match : miss;
}

}  // namespace detail

// Viterbi over the primitive chain of one segment.  Ties break toward the
// lower index.  Returns the path and its score.
inline std::pair<std::vector<int>, double> assign_primitives_scored(
    const ActionModel& am, const ObservationSequence& segment,
    const AssignOptions& opts = {}, WarningLog* log = nullptr) {
  const int len = static_cast<int>(segment.size());
  if (len < 1) throw std::invalid_argument("assign_primitives: empty segment");
  const int nz = am.sub.stages.n_primitives;
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();

  Eigen::MatrixXd em = detail::primitive_emissions(am, segment);
  detail::apply_template(&em, am, opts);

  Eigen::MatrixXd log_theta(nz, nz);
  for (int i = 0; i < nz; ++i)
    for (int j = 0; j < nz; ++j)
      log_theta(i, j) =
          am.sub.theta(i, j) > 0.0 ? std::log(am.sub.theta(i, j)) : neg_inf;

  auto run = [&](bool constrain_end) {
    Eigen::MatrixXd score = Eigen::MatrixXd::Constant(len, nz, neg_inf);
    Eigen::MatrixXi back = Eigen::MatrixXi::Zero(len, nz);
    score.row(0) = em.row(0);
    for (int t = 1; t < len; ++t) {
      for (int j = 0; j < nz; ++j) {
        double best = neg_inf;
        int arg = 0;
        for (int i = 0; i < nz; ++i) {
          const double cand = score(t - 1, i) + log_theta(i, j);
          if (cand > best) {
            best = cand;
            arg = i;
          }
        }
        score(t, j) = best + em(t, j);
        back(t, j) = arg;
      }
    }
    double best = neg_inf;
    int arg = -1;
    for (int j = 0; j < nz; ++j) {
      if (constrain_end &&
          am.sub.stages.g[j] != am.sub.stages.terminal_stage())
        continue;
      if (score(len - 1, j) > best) {
        best = score(len - 1, j);
        arg = j;
      }
    }
    std::vector<int> path(len, 0);
    if (arg >= 0) {
      path[len - 1] = arg;
      for (int t = len - 1; t > 0; --t) path[t - 1] = back(t, path[t]);
    }
    return std::make_pair(path, best);
  };

  auto [path, best] = run(opts.constrain_terminal_end);
  if (!std::isfinite(best) && opts.constrain_terminal_end) {
    warn(log, "assign_primitives: no feasible terminal-constrained path, "
              "relaxing constraint");
    std::tie(path, best) = run(false);
  }
  if (!std::isfinite(best))
    throw std::runtime_error("assign_primitives: no feasible path");
  return {std::move(path), best};
}

inline std::vector<int> assign_primitives(const ActionModel& am,
                                          const ObservationSequence& segment,
                                          const AssignOptions& opts = {},
                                          WarningLog* log = nullptr) {
  return assign_primitives_scored(am, segment, opts, log).first;
}

// Smoothed per-frame primitive posteriors over one segment (log-domain
// forward-backward); the final frame can be restricted to the terminal stage.
inline Eigen::MatrixXd primitive_posteriors(const ActionModel& am,
                                            const ObservationSequence& segment,
                                            bool terminal_end = true) {
  const int len = static_cast<int>(segment.size());
  const int nz = am.sub.stages.n_primitives;
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();
  Eigen::MatrixXd em = detail::primitive_emissions(am, segment);
  if (terminal_end) {
    bool any = false;
    for (int j = 0; j < nz; ++j)
      if (am.sub.stages.g[j] == am.sub.stages.terminal_stage() &&
          std::isfinite(em(len - 1, j)))
        any = true;
    if (any)
      for (int j = 0; j < nz; ++j)
        if (am.sub.stages.g[j] != am.sub.stages.terminal_stage())
          em(len - 1, j) = neg_inf;
  }
  Eigen::MatrixXd log_theta(nz, nz);
  for (int i = 0; i < nz; ++i)
    for (int j = 0; j < nz; ++j)
      log_theta(i, j) =
          am.sub.theta(i, j) > 0.0 ? std::log(am.sub.theta(i, j)) : neg_inf;

  auto logsumexp = [](const Eigen::VectorXd& v) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().sum());
  };

  Eigen::MatrixXd fwd(len, nz), bwd(len, nz);
  fwd.row(0) = em.row(0);
  for (int t = 1; t < len; ++t)
    for (int j = 0; j < nz; ++j) {
      Eigen::VectorXd acc =
          fwd.row(t - 1).transpose() + log_theta.col(j);
      fwd(t, j) = logsumexp(acc) + em(t, j);
    }
  bwd.row(len - 1).setZero();
  for (int t = len - 2; t >= 0; --t)
    for (int i = 0; i < nz; ++i) {
      Eigen::VectorXd acc = log_theta.row(i).transpose() +
                            em.row(t + 1).transpose() +
                            bwd.row(t + 1).transpose();
      bwd(t, i) = logsumexp(acc);
    }
  Eigen::MatrixXd post(len, nz);
  for (int t = 0; t < len; ++t) {
    Eigen::VectorXd lp = fwd.row(t).transpose() + bwd.row(t).transpose();
    const double norm = logsumexp(lp);
    if (!std::isfinite(norm)) {
      post.row(t).setConstant(1.0 / nz);
    } else {
      post.row(t) = (lp.array() - norm).exp().transpose();
    }
  }
  return post;
}

// ---- Full training pipeline -----------------------------------------------

namespace detail {

struct Segment {
  const ObservationSequence* seq = nullptr;
  int begin = 0;
  int end = 0;  // exclusive
  bool followed_by_boundary = false;

  int length() const { return end - begin; }
  ObservationSequence frames() const {
    return ObservationSequence(seq->begin() + begin, seq->begin() + end);
  }
};

inline std::vector<Segment> collect_segments(const LabeledDataset& dataset,
                                             int action) {
  std::vector<Segment> out;
  for (const auto& [obs, labels] : dataset.sequences) {
    int start = 0;
    for (int t = 1; t <= static_cast<int>(labels.size()); ++t) {
      if (t == static_cast<int>(labels.size()) || labels[t] != labels[t - 1]) {
        if (labels[start] == action) {
          Segment seg;
          seg.seq = &obs;
          seg.begin = start;
          seg.end = t;
          seg.followed_by_boundary = t < static_cast<int>(labels.size());
          out.push_back(seg);
        }
        start = t;
      }
    }
  }
  return out;
}

// Stage budgets proportional to stage frame share, at least one primitive
// per stage (largest remainder).
inline std::vector<int> stage_budgets(const std::vector<double>& shares,
                                      int n_primitives) {
  const int nq = static_cast<int>(shares.size());
  std::vector<int> budget(nq, 1);
  int remaining = n_primitives - nq;
  std::vector<double> quota(nq);
  const double total = std::max(
      1e-12, std::accumulate(shares.begin(), shares.end(), 0.0));
  for (int q = 0; q < nq; ++q)
    quota[q] = shares[q] / total * n_primitives - 1.0;
  while (remaining > 0) {
    int arg = 0;
    for (int q = 1; q < nq; ++q)
      if (quota[q] > quota[arg]) arg = q;
    budget[arg] += 1;
    quota[arg] -= 1.0;
    --remaining;
  }
  return budget;
}

inline ActionModel train_action(const LabeledDataset& dataset, int action,
                                const TrainingConfig& config,
                                const Eigen::MatrixXd& global_cov,
                                std::vector<double>* em_curve,
                                WarningLog* log) {
  const auto segments = collect_segments(dataset, action);
  if (segments.empty())
    throw std::invalid_argument("train: action " + std::to_string(action) +
                                " has no segments");
  const Eigen::Index m = segments[0].seq->at(0).size();
  const int nz = config.n_primitives;
  const int nq = config.n_stages;

  // Stage templates from the 15% split, pooled frames per stage.
  std::vector<std::vector<int>> templates;
  std::vector<double> stage_frames(nq, 0.0);
  for (const auto& seg : segments) {
    templates.push_back(init_stage_split(seg.length(), nq));
    for (int st : templates.back()) stage_frames[st] += 1.0;
  }
  const std::vector<int> budgets = stage_budgets(stage_frames, nz);

  // Stage map: primitives numbered consecutively by stage.
  ActionModel am;
  am.sub.stages.n_primitives = nz;
  am.sub.stages.n_stages = nq;
  am.sub.stages.g.resize(nz);
  std::vector<int> stage_first(nq, 0);
  {
    int next = 0;
    for (int q = 0; q < nq; ++q) {
      stage_first[q] = next;
      for (int b = 0; b < budgets[q]; ++b) am.sub.stages.g[next++] = q;
    }
  }

  // Initial assignment: K-means within each stage's pooled frames.
  std::vector<std::vector<int>> assignments(segments.size());
  {
    std::vector<std::vector<Eigen::VectorXd>> pool(nq);
    std::vector<std::vector<std::pair<int, int>>> origin(nq);  // (segment, t)
    for (std::size_t si = 0; si < segments.size(); ++si) {
      assignments[si].assign(segments[si].length(), 0);
      for (int t = 0; t < segments[si].length(); ++t) {
        const int q = templates[si][t];
        pool[q].push_back(segments[si].seq->at(segments[si].begin + t));
        origin[q].emplace_back(static_cast<int>(si), t);
      }
    }
    for (int q = 0; q < nq; ++q) {
      if (pool[q].empty()) continue;
      const int k = std::min<int>(budgets[q], static_cast<int>(pool[q].size()));
      const auto clusters =
          kmeans(pool[q], k, splitmix64(config.seed ^ (action * 131 + q)));
      for (std::size_t i = 0; i < clusters.size(); ++i) {
        const auto [si, t] = origin[q][i];
        assignments[si][t] = stage_first[q] + clusters[i];
      }
    }
  }

  const double total_transitions = [&] {
    double total = 0.0;
    for (const auto& seg : segments)
      total += std::max(seg.length() - 1, 0);
    return total;
  }();
  const double alpha =
      config.alpha >= 0.0 ? config.alpha : 0.1 * total_transitions;

  auto refit = [&](const std::vector<std::vector<int>>& assign) {
    std::vector<std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>>
        pairs(nz);
    Eigen::VectorXd first_counts = Eigen::VectorXd::Zero(nz);
    for (std::size_t si = 0; si < segments.size(); ++si) {
      const auto& seg = segments[si];
      first_counts[assign[si][0]] += 1.0;
      for (int t = 1; t < seg.length(); ++t)
        pairs[assign[si][t]].emplace_back(seg.seq->at(seg.begin + t - 1),
                                          seg.seq->at(seg.begin + t));
    }
    am.lds.clear();
    for (int j = 0; j < nz; ++j)
      am.lds.push_back(fit_lds(pairs[j], config.lds_mode, global_cov, log));
    // init_primitive restricted to the starting stage.
    Eigen::VectorXd init = Eigen::VectorXd::Zero(nz);
    double mass = 0.0;
    for (int j = 0; j < nz; ++j)
      if (am.sub.stages.g[j] == 0) {
        init[j] = first_counts[j];
        mass += first_counts[j];
      }
    if (mass > 0.0) {
      init /= mass;
    } else {
      for (int j = 0; j < nz; ++j)
        if (am.sub.stages.g[j] == 0) init[j] = 1.0;
      init /= init.sum();
    }
    am.sub.init_primitive = init;

    std::vector<std::vector<int>> seqs(assign.begin(), assign.end());
    const TransitionCounts xi = count_transitions(seqs, nz);
    auto [theta, phi] = estimate_blockwise_map(xi, am.sub.stages, alpha, log);
    am.sub.theta = std::move(theta);
  };

  double best_score = -std::numeric_limits<double>::infinity();
  ActionModel best_model;
  std::vector<std::vector<int>> best_assign;
  double prev_score = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < config.max_em_iters; ++iter) {
    refit(assignments);
    double score = 0.0;
    std::vector<std::vector<int>> next(segments.size());
    for (std::size_t si = 0; si < segments.size(); ++si) {
      AssignOptions opts;
      opts.constrain_terminal_end = true;
      if (iter == 0) opts.stage_template = &templates[si];
      auto [path, s] =
          assign_primitives_scored(am, segments[si].frames(), opts, log);
      next[si] = std::move(path);
      score += s;
    }
    if (em_curve) em_curve->push_back(score);
    if (score > best_score) {
      best_score = score;
      best_model = am;
      best_assign = next;
    }
    if (iter > 0 && std::isfinite(prev_score)) {
      const double rel = std::abs(score - prev_score) /
                         std::max(1.0, std::abs(prev_score));
      if (rel < config.em_tol) {
        assignments = std::move(next);
        break;
      }
      if (score < prev_score) {
        warn(log, "train: EM oscillation for action " + std::to_string(action) +
                      ", keeping best iterate");
        break;
      }
    }
    prev_score = score;
    assignments = std::move(next);
  }
  // Final parameters from the best assignment.
  am = best_model;
  refit(best_assign);
  return am;
}

}  // namespace detail

// End-to-end learning: per-action hard EM for STM + LDS parameters, then the
// duration model and (optionally) the discriminative boundary weights.
inline FullModel train(const LabeledDataset& dataset,
                       const TrainingConfig& config,
                       WarningLog* log = nullptr,
                       TrainingSummary* summary = nullptr) {
  config.check_valid();
  if (dataset.sequences.empty())
    throw std::invalid_argument("train: empty dataset");
  int n_actions = 0;
  for (const auto& [obs, labels] : dataset.sequences) {
    if (obs.size() != labels.size() || obs.empty())
      throw std::invalid_argument("train: sequence/label size mismatch");
    for (int s : labels) {
      if (s < 0) throw std::invalid_argument("train: negative label");
      n_actions = std::max(n_actions, s + 1);
    }
  }

  // Global data covariance, used as the LDS fallback.
  const Eigen::Index m = dataset.sequences[0].first[0].size();
  Eigen::MatrixXd global_cov;
  {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(m);
    double count = 0.0;
    for (const auto& [obs, labels] : dataset.sequences)
      for (const auto& y : obs) {
        mean += y;
        count += 1.0;
      }
    mean /= count;
    global_cov = Eigen::MatrixXd::Zero(m, m);
    for (const auto& [obs, labels] : dataset.sequences)
      for (const auto& y : obs)
        global_cov += (y - mean) * (y - mean).transpose();
    global_cov /= count;
    global_cov = 0.5 * (global_cov + global_cov.transpose());
  }

  FullModel model;
  model.n_actions = n_actions;
  if (summary) summary->em_curve.assign(n_actions, {});
  for (int i = 0; i < n_actions; ++i) {
    auto am = detail::train_action(dataset, i, config, global_cov,
                                   summary ? &summary->em_curve[i] : nullptr,
                                   log);
    if (summary) {
      const double zeros =
          (am.sub.theta.array() == 0.0).cast<double>().sum();
      summary->theta_sparsity.push_back(zeros / am.sub.theta.size());
    }
    model.actions.push_back(std::move(am.sub));
    model.lds.push_back(std::move(am.lds));
  }

  // Duration model from labels.
  std::vector<std::vector<int>> label_seqs;
  for (const auto& [obs, labels] : dataset.sequences)
    label_seqs.push_back(labels);
  auto [duration, transition] =
      fit_logistic_duration(label_seqs, n_actions, log);
  model.duration = std::move(duration);
  model.transition = std::move(transition);
  for (int i = 0; i < n_actions; ++i)
    model.duration.omega[i].assign(model.actions[i].stages.n_primitives,
                                   Eigen::VectorXd::Zero(m));

  // Initial action distribution: smoothed first-frame label counts.
  {
    Eigen::VectorXd counts = Eigen::VectorXd::Ones(n_actions);
    for (const auto& [obs, labels] : dataset.sequences)
      counts[labels.front()] += 1.0;
    model.init_action = counts / counts.sum();
  }
  // Initial state: first-frame mean, global covariance.
  {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(m);
    double count = 0.0;
    for (const auto& [obs, labels] : dataset.sequences) {
      mean += obs.front();
      count += 1.0;
    }
    model.init_state.mean = mean / count;
    model.init_state.cov =
        global_cov + 1e-6 * Eigen::MatrixXd::Identity(m, m);
  }

  // Discriminative boundary weights from STM posteriors at terminal-stage
  // frames.
  if (config.fit_dbm) {
    for (int i = 0; i < n_actions; ++i) {
      ActionModel am{model.actions[i], model.lds[i]};
      const int nz = am.sub.stages.n_primitives;
      const int terminal = am.sub.stages.terminal_stage();
      std::vector<std::vector<BoundaryTrainingTuple>> tuples(nz);
      for (const auto& seg : detail::collect_segments(dataset, i)) {
        const auto frames = seg.frames();
        const Eigen::MatrixXd post = primitive_posteriors(am, frames, true);
        const int len = seg.length();
        for (int t = 0; t < len; ++t) {
          const bool is_boundary = t == len - 1;
          if (is_boundary && !seg.followed_by_boundary) continue;  // censored
          for (int j = 0; j < nz; ++j) {
            if (am.sub.stages.g[j] != terminal || post(t, j) <= 1e-8) continue;
            BoundaryTrainingTuple tup;
            tup.action = i;
            tup.duration = t + 1;
            tup.reset_label = is_boundary ? 1.0 : 0.0;
            tup.primitive_posterior = post(t, j);
            tup.state_posterior =
                GaussianBelief(frames[t], model.lds[i][j].R);
            tuples[j].push_back(std::move(tup));
          }
        }
      }
      for (int j = 0; j < nz; ++j) {
        if (am.sub.stages.g[j] != terminal) continue;
        bool has_pos = false, has_neg = false;
        for (const auto& tup : tuples[j]) {
          (tup.reset_label > 0.5 ? has_pos : has_neg) = true;
        }
        if (tuples[j].empty() || !has_pos || !has_neg) {
          warn(log, "train: not enough boundary tuples for action " +
                        std::to_string(i) + " primitive " + std::to_string(j) +
                        ", omega stays zero");
          continue;
        }
        model.duration.omega[i][j] =
            fit_dbm_omega(tuples[j], i, model.duration, log);
      }
    }
  }

  check_valid(model);
  return model;
}

}  // namespace sssm
