#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
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
#include "sssm/train.hpp"

namespace sssm {

struct Particle {
  int s = 0;
  int d = 1;
  int z = 0;
  GaussianBelief belief;
  double log_weight = 0.0;
};

// Weighted marginals recorded per frame before resampling.
struct FrameMarginal {
  Eigen::MatrixXd sz;       // weighted joint over (action, primitive)
  Eigen::VectorXd x_mean;   // weighted mean of belief means
  double reset_mass = 0.0;  // weighted fraction of particles with d == 1
  double log_evidence = 0.0;

  Eigen::VectorXd action_marginal() const { return sz.rowwise().sum(); }
};

struct FilterOptions {
  // 0 disables the ESS trigger and resamples every frame (the default);
  // otherwise resample only when ESS < ess_fraction * N_P.
  double ess_fraction = 0.0;
  WarningLog* log = nullptr;
};

struct FilterState {
  std::vector<Particle> particles;
  int t = 0;  // frames processed
  std::uint64_t seed = 0;
  std::vector<FrameMarginal> history;
};

namespace detail {

inline int max_primitives(const FullModel& model) {
  int nz = 0;
  for (const auto& sub : model.actions)
    nz = std::max(nz, sub.stages.n_primitives);
  return nz;
}

inline double normalize_log_weights(std::vector<Particle>& particles) {
  double max_lw = -std::numeric_limits<double>::infinity();
  for (const auto& p : particles) max_lw = std::max(max_lw, p.log_weight);
  if (!std::isfinite(max_lw)) return max_lw;
  double sum = 0.0;
  for (const auto& p : particles) sum += std::exp(p.log_weight - max_lw);
  const double lse = max_lw + std::log(sum);
  for (auto& p : particles) p.log_weight -= lse;
  return lse;
}

inline FrameMarginal record_marginal(const std::vector<Particle>& particles,
                                     const FullModel& model) {
  FrameMarginal fm;
  fm.sz = Eigen::MatrixXd::Zero(model.n_actions, max_primitives(model));
  fm.x_mean = Eigen::VectorXd::Zero(model.state_dim());
  for (const auto& p : particles) {
    const double w = std::exp(p.log_weight);
    fm.sz(p.s, p.z) += w;
    fm.x_mean += w * p.belief.mean;
    if (p.d == 1) fm.reset_mass += w;
  }
  return fm;
}

inline double effective_sample_size(const std::vector<Particle>& particles) {
  double sum_sq = 0.0;
  for (const auto& p : particles) {
    const double w = std::exp(p.log_weight);
    sum_sq += w * w;
  }
  return sum_sq > 0.0 ? 1.0 / sum_sq : 0.0;
}

inline void systematic_resample(std::vector<Particle>& particles, Rng& rng) {
  const std::size_t n = particles.size();
  std::vector<double> cdf(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += std::exp(particles[i].log_weight);
    cdf[i] = acc;
  }
  const double u0 = rng.uniform() / static_cast<double>(n);
  std::vector<Particle> next;
  next.reserve(n);
  std::size_t j = 0;
  const double uniform_lw = -std::log(static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double u = u0 + static_cast<double>(i) / static_cast<double>(n);
    while (j + 1 < n && cdf[j] < u * acc) ++j;
    next.push_back(particles[j]);
    next.back().log_weight = uniform_lw;
  }
  particles = std::move(next);
}

}  // namespace detail

// All particles start at d = 1; S from init_action, Z from the action's
// initial primitive distribution; beliefs are Kalman updates of init_state
// against the first observation.
inline FilterState init_filter(const FullModel& model, const Eigen::VectorXd& y1,
                               int n_particles, std::uint64_t seed,
                               const FilterOptions& opts = {}) {
  if (n_particles < 1) throw std::invalid_argument("init_filter: n_particles < 1");
  FilterState state;
  state.seed = seed;
  state.particles.reserve(n_particles);
  for (int n = 0; n < n_particles; ++n) {
    Rng rng(seed, 0, static_cast<std::uint64_t>(n) + 1);
    Particle p;
    p.d = 1;
    p.s = rng.categorical(model.init_action);
    p.z = rng.categorical(model.actions[p.s].init_primitive);
    auto [belief, log_evidence] =
        kalman_step(model.init_state, y1, model.lds[p.s][p.z]);
    p.belief = std::move(belief);
    p.log_weight = log_evidence;
    state.particles.push_back(std::move(p));
  }
  const double lse = detail::normalize_log_weights(state.particles);
  FrameMarginal fm = detail::record_marginal(state.particles, model);
  fm.log_evidence = lse - std::log(static_cast<double>(n_particles));
  state.history.push_back(std::move(fm));

  Rng resample_rng(seed, 0, 0);
  const double ess = detail::effective_sample_size(state.particles);
  if (opts.ess_fraction <= 0.0 || ess < opts.ess_fraction * n_particles)
    detail::systematic_resample(state.particles, resample_rng);
  state.t = 1;
  return state;
}

// One filtering step: propose (S, D, Z) from the prior with the duration
// logistic evaluated at the belief mean, weight by the expected likelihood
// (Gaussian evidence times the logistic-Gaussian expectation over the
// conditioned previous state), Kalman-update the beliefs, then normalize,
// record marginals, and resample.
inline void step(FilterState& state, const Eigen::VectorXd& y,
                 const FullModel& model, const FilterOptions& opts = {}) {
  const int frame = state.t;
  const std::size_t n_particles = state.particles.size();

  for (std::size_t n = 0; n < n_particles; ++n) {
    Particle& p = state.particles[n];
    Rng rng(state.seed, static_cast<std::uint64_t>(frame),
            static_cast<std::uint64_t>(n) + 1);

    const int prev_s = p.s, prev_d = p.d, prev_z = p.z;
    const auto& prev_stages = model.actions[prev_s].stages;
    const bool terminal =
        prev_stages.g[prev_z] == prev_stages.terminal_stage();

    // Proposal: duration logistic at the belief mean.
    const double q_reset = reset_probability(prev_s, prev_z, prev_d,
                                             p.belief.mean, model.duration,
                                             prev_stages);
    const bool reset = terminal && rng.bernoulli(q_reset);
    if (reset) {
      p.d = 1;
      p.s = rng.categorical(model.transition.a.row(prev_s).transpose());
      p.z = rng.categorical(model.actions[p.s].init_primitive);
    } else {
      p.d = prev_d + 1;
      p.z = rng.categorical(model.actions[prev_s].theta.row(prev_z).transpose());
    }

    const auto& lds = model.lds[p.s][p.z];
    auto [conditioned, log_c3] = condition_previous_state(p.belief, y, lds);

    // Expected duration factor under the conditioned previous state vs the
    // point-evaluated proposal factor.
    double log_ratio = 0.0;
    if (terminal) {
      const Eigen::VectorXd& w = model.duration.omega_at(prev_s, prev_z);
      const Eigen::VectorXd omega =
          w.size() > 0 ? w : Eigen::VectorXd::Zero(model.state_dim());
      const double offset =
          model.duration.nu[prev_s] * (prev_d - model.duration.beta[prev_s]);
      const double expected =
          sigmoid_gaussian_expectation(offset, omega, conditioned);
      const double target =
          clamp_probability(reset ? expected : 1.0 - expected);
      const double proposal =
          clamp_probability(reset ? q_reset : 1.0 - q_reset);
      log_ratio = std::log(target) - std::log(proposal);
    }
    p.log_weight += log_c3 + log_ratio;
    p.belief = kalman_step(p.belief, y, lds).first;
  }

  // Weighted evidence before normalization (previous weights were normalized).
  const double lse = detail::normalize_log_weights(state.particles);
  if (!std::isfinite(lse)) {
    warn(opts.log, "rbpf::step: all particle weights vanished at frame " +
                       std::to_string(frame) + ", resetting to uniform");
    const double uniform_lw = -std::log(static_cast<double>(n_particles));
    for (auto& p : state.particles) p.log_weight = uniform_lw;
  }
  FrameMarginal fm = detail::record_marginal(state.particles, model);
  fm.log_evidence = std::isfinite(lse) ? lse : 0.0;
  state.history.push_back(std::move(fm));

  Rng resample_rng(state.seed, static_cast<std::uint64_t>(frame), 0);
  const double ess = detail::effective_sample_size(state.particles);
  if (opts.ess_fraction <= 0.0 ||
      ess < opts.ess_fraction * static_cast<double>(n_particles))
    detail::systematic_resample(state.particles, resample_rng);
  state.t += 1;
}

inline FilterState run_filter(const FullModel& model,
                              const ObservationSequence& obs, int n_particles,
                              std::uint64_t seed,
                              const FilterOptions& opts = {}) {
  if (obs.empty()) throw std::invalid_argument("run_filter: empty sequence");
  FilterState state = init_filter(model, obs[0], n_particles, seed, opts);
  for (std::size_t t = 1; t < obs.size(); ++t)
    step(state, obs[t], model, opts);
  return state;
}

// Per-frame argmax of the recorded weighted marginals; D reconstructed from
// the label boundary structure; X from the recorded belief means.
inline HiddenPath extract_labels(const FilterState& state) {
  HiddenPath path;
  const std::size_t len = state.history.size();
  path.s.resize(len);
  path.z.resize(len);
  path.x.resize(len);
  for (std::size_t t = 0; t < len; ++t) {
    const auto& fm = state.history[t];
    const Eigen::VectorXd action_mass = fm.action_marginal();
    int s = 0;
    for (int i = 1; i < action_mass.size(); ++i)
      if (action_mass[i] > action_mass[s]) s = i;
    int z = 0;
    for (int j = 1; j < fm.sz.cols(); ++j)
      if (fm.sz(s, j) > fm.sz(s, z)) z = j;
    path.s[t] = s;
    path.z[t] = z;
    path.x[t] = fm.x_mean;
  }
  path.d = reconstruct_durations(path.s);
  return path;
}

inline int dominant_primitive(const HiddenPath& path, int begin, int end) {
  if (begin < 0 || end > static_cast<int>(path.z.size()) || begin >= end)
    throw std::invalid_argument("dominant_primitive: empty or invalid segment");
  std::vector<int> counts;
  for (int t = begin; t < end; ++t) {
    if (path.z[t] >= static_cast<int>(counts.size()))
      counts.resize(path.z[t] + 1, 0);
    counts[path.z[t]] += 1;
  }
  int best = 0;
  for (int j = 1; j < static_cast<int>(counts.size()); ++j)
    if (counts[j] > counts[best]) best = j;
  return best;
}

namespace detail {

inline std::vector<int> boundary_positions(const std::vector<int>& labels) {
  std::vector<int> out;
  for (std::size_t t = 1; t < labels.size(); ++t)
    if (labels[t] != labels[t - 1]) out.push_back(static_cast<int>(t));
  return out;
}

// Rebuilds (z, d, x) for a given per-frame action labeling: Viterbi primitives
// per segment (terminal-stage end where a boundary follows), durations from
// the labels, states from the Kalman filter means along the chosen regimes.
inline HiddenPath rebuild_path(const FullModel& model,
                               const ObservationSequence& obs,
                               const std::vector<int>& labels) {
  const int len = static_cast<int>(labels.size());
  HiddenPath path;
  path.s = labels;
  path.d = reconstruct_durations(labels);
  path.z.resize(len);
  path.x.resize(len);
  int start = 0;
  for (int t = 1; t <= len; ++t) {
    if (t == len || labels[t] != labels[t - 1]) {
      const int action = labels[start];
      ActionModel am{model.actions[action], model.lds[action]};
      ObservationSequence segment(obs.begin() + start, obs.begin() + t);
      AssignOptions opts;
      opts.constrain_terminal_end = t < len;
      const auto z = assign_primitives(am, segment, opts);
      for (int u = start; u < t; ++u) path.z[u] = z[u - start];
      start = t;
    }
  }
  GaussianBelief belief = model.init_state;
  for (int t = 0; t < len; ++t) {
    belief = kalman_step(belief, obs[t], model.lds[path.s[t]][path.z[t]]).first;
    path.x[t] = belief.mean;
  }
  return path;
}

}  // namespace detail

// Offline local boundary refinement: each detected boundary is moved to the
// position within +/- window/2 (clipped, non-crossing) that maximizes the
// complete-path log joint, processing boundaries left to right.
inline HiddenPath refine_boundaries(const FullModel& model,
                                    const ObservationSequence& obs,
                                    const HiddenPath& labels, int window = 40) {
  if (labels.length() != obs.size())
    throw std::invalid_argument("refine_boundaries: length mismatch");
  std::vector<int> s = labels.s;
  const int len = static_cast<int>(s.size());
  const int half = window / 2;

  std::vector<int> boundaries = detail::boundary_positions(s);
  for (std::size_t k = 0; k < boundaries.size(); ++k) {
    const int b = boundaries[k];
    const int prev_b = k == 0 ? 0 : boundaries[k - 1];
    const int next_b =
        k + 1 < boundaries.size() ? boundaries[k + 1] : len;
    const int lo = std::max(b - half, prev_b + 1);
    const int hi = std::min(b + half, next_b - 1);
    const int left_action = s[b - 1];
    const int right_action = s[b];

    auto score_at = [&](int cand) {
      std::vector<int> trial = s;
      for (int t = prev_b; t < cand; ++t) trial[t] = left_action;
      for (int t = cand; t < next_b; ++t) trial[t] = right_action;
      return log_joint(model, detail::rebuild_path(model, obs, trial), obs);
    };
    // The original position wins ties, so an already-optimal labeling is a
    // fixed point.
    double best_score = score_at(b);
    int best_pos = b;
    for (int cand = lo; cand <= hi; ++cand) {
      if (cand == b) continue;
      const double score = score_at(cand);
      if (score > best_score) {
        best_score = score;
        best_pos = cand;
      }
    }
    if (best_pos != b) {
      for (int t = prev_b; t < best_pos; ++t) s[t] = left_action;
      for (int t = best_pos; t < next_b; ++t) s[t] = right_action;
      boundaries[k] = best_pos;
    }
  }
  return detail::rebuild_path(model, obs, s);
}

}  // namespace sssm
