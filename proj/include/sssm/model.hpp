#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <json.hpp>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sssm/common.hpp"
#include "sssm/duration.hpp"
#include "sssm/gaussian.hpp"
#include "sssm/rng.hpp"
#include "sssm/stm.hpp"

namespace sssm {

inline constexpr int kModelFormatVersion = 1;

// Per-action substructure: primitive transition matrix, stage map, and the
// initial primitive distribution (supported on starting-stage primitives).
struct SubstructureModel {
  TransitionMatrix theta;
  StageMap stages;
  Eigen::VectorXd init_primitive;
};

struct FullModel {
  int n_actions = 0;
  std::vector<SubstructureModel> actions;
  std::vector<std::vector<LdsParams>> lds;  // [action][primitive]
  DurationParams duration;
  ActionTransition transition;
  Eigen::VectorXd init_action;
  GaussianBelief init_state;

  int state_dim() const {
    return static_cast<int>(lds.at(0).at(0).state_dim());
  }
  int obs_dim() const { return static_cast<int>(lds.at(0).at(0).obs_dim()); }
  int n_primitives(int action) const {
    return actions.at(action).stages.n_primitives;
  }
};

struct HiddenPath {
  std::vector<int> s;  // action per frame
  std::vector<int> d;  // duration counter per frame
  std::vector<int> z;  // primitive per frame
  std::vector<Eigen::VectorXd> x;  // continuous state per frame

  std::size_t length() const { return s.size(); }
};

using ObservationSequence = std::vector<Eigen::VectorXd>;

// Returns human-readable invariant violations; empty means valid.
inline std::vector<std::string> validate(const FullModel& model) {
  std::vector<std::string> out;
  auto note = [&out](const std::string& msg) { out.push_back(msg); };
  if (model.n_actions < 1 ||
      static_cast<int>(model.actions.size()) != model.n_actions ||
      static_cast<int>(model.lds.size()) != model.n_actions) {
    note("model: action container sizes inconsistent with n_actions");
    return out;
  }
  for (int i = 0; i < model.n_actions; ++i) {
    const auto& sub = model.actions[i];
    const std::string tag = "action " + std::to_string(i) + ": ";
    try {
      sub.stages.check_valid();
    } catch (const std::exception& e) {
      note(tag + e.what());
      continue;
    }
    if (!is_row_stochastic(sub.theta))
      note(tag + "theta not row-stochastic within 1e-9");
    if (sub.init_primitive.size() != sub.stages.n_primitives ||
        std::abs(sub.init_primitive.sum() - 1.0) > kRowSumTol ||
        sub.init_primitive.minCoeff() < 0.0)
      note(tag + "init_primitive not a probability vector");
    else
      for (int j = 0; j < sub.stages.n_primitives; ++j)
        if (sub.init_primitive[j] > 0.0 && sub.stages.g[j] != 0)
          note(tag + "init_primitive mass on non-starting stage primitive " +
               std::to_string(j));
    if (static_cast<int>(model.lds[i].size()) != sub.stages.n_primitives) {
      note(tag + "LDS parameter count mismatch");
      continue;
    }
    for (int j = 0; j < sub.stages.n_primitives; ++j) {
      try {
        model.lds[i][j].check_valid();
        if (model.lds[i][j].state_dim() != model.lds[0][0].state_dim() ||
            model.lds[i][j].obs_dim() != model.lds[0][0].obs_dim())
          note(tag + "LDS dimensions differ across primitives");
      } catch (const std::exception& e) {
        note(tag + "primitive " + std::to_string(j) + ": " + e.what());
      }
    }
  }
  try {
    model.duration.check_valid();
    if (model.duration.n_actions() != model.n_actions)
      note("duration: parameter count mismatch");
  } catch (const std::exception& e) {
    note(std::string("duration: ") + e.what());
  }
  try {
    model.transition.check_valid();
    if (model.transition.n_actions() != model.n_actions)
      note("transition: size mismatch");
  } catch (const std::exception& e) {
    note(std::string("transition: ") + e.what());
  }
  if (model.init_action.size() != model.n_actions ||
      std::abs(model.init_action.sum() - 1.0) > kRowSumTol ||
      model.init_action.minCoeff() < 0.0)
    note("init_action: not a probability vector");
  try {
    model.init_state.check_valid();
    if (!model.lds.empty() && !model.lds[0].empty() &&
        model.init_state.dim() != model.lds[0][0].state_dim())
      note("init_state: dimension mismatch with LDS state");
  } catch (const std::exception& e) {
    note(std::string("init_state: ") + e.what());
  }
  return out;
}

inline void check_valid(const FullModel& model) {
  const auto violations = validate(model);
  if (!violations.empty())
    throw std::invalid_argument("invalid model: " + violations.front());
}

// Ancestral sampling of (S, D, Z, X, Y).  Deterministic given seed.
inline std::pair<HiddenPath, ObservationSequence> sample_sequence(
    const FullModel& model, int t_max, std::uint64_t seed) {
  if (t_max < 1) throw std::invalid_argument("sample_sequence: t_max < 1");
  Rng rng(seed);
  HiddenPath path;
  ObservationSequence obs;
  path.s.reserve(t_max);
  path.d.reserve(t_max);
  path.z.reserve(t_max);
  path.x.reserve(t_max);
  obs.reserve(t_max);

  const Eigen::MatrixXd init_root = psd_sqrt(model.init_state.cov);
  int s = rng.categorical(model.init_action);
  int z = rng.categorical(model.actions[s].init_primitive);
  int d = 1;
  Eigen::VectorXd x =
      model.init_state.mean + init_root * rng.gaussian_vector(model.state_dim());

  for (int t = 0; t < t_max; ++t) {
    if (t > 0) {
      const double p_reset =
          reset_probability(s, z, d, x, model.duration, model.actions[s].stages);
      if (rng.bernoulli(p_reset)) {
        d = 1;
        s = rng.categorical(model.transition.a.row(s).transpose());
        z = rng.categorical(model.actions[s].init_primitive);
      } else {
        d += 1;
        z = rng.categorical(model.actions[s].theta.row(z).transpose());
      }
      const auto& lds = model.lds[s][z];
      x = lds.A * x + psd_sqrt(lds.Q) * rng.gaussian_vector(model.state_dim());
    }
    const auto& lds = model.lds[s][z];
    const Eigen::VectorXd y =
        lds.B * x + psd_sqrt(lds.R) * rng.gaussian_vector(model.obs_dim());
    path.s.push_back(s);
    path.d.push_back(d);
    path.z.push_back(z);
    path.x.push_back(x);
    obs.push_back(y);
  }
  return {std::move(path), std::move(obs)};
}

// Log probability of a complete assignment.  Paths violating hard zeros
// (reset from a non-terminal stage, cross-action continuation, ...) score
// -infinity.
inline double log_joint(const FullModel& model, const HiddenPath& path,
                        const ObservationSequence& obs) {
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();
  const std::size_t len = path.length();
  if (len == 0 || obs.size() != len || path.d.size() != len ||
      path.z.size() != len || path.x.size() != len)
    throw std::invalid_argument("log_joint: path/observation size mismatch");

  auto log_or_neg_inf = [](double p) {
    return p > 0.0 ? std::log(p) : neg_inf;
  };

  double total = 0.0;
  {
    const int s = path.s[0], z = path.z[0];
    if (path.d[0] != 1) return neg_inf;
    total += log_or_neg_inf(model.init_action[s]);
    total += log_or_neg_inf(model.actions[s].init_primitive[z]);
    total += log_gaussian(path.x[0], model.init_state.mean, model.init_state.cov);
    const auto& lds = model.lds[s][z];
    total += log_gaussian(obs[0], lds.B * path.x[0], lds.R);
  }
  for (std::size_t t = 1; t < len; ++t) {
    const int sp = path.s[t - 1], zp = path.z[t - 1], dp = path.d[t - 1];
    const int s = path.s[t], z = path.z[t], d = path.d[t];
    const double p_reset = reset_probability(sp, zp, dp, path.x[t - 1],
                                             model.duration,
                                             model.actions[sp].stages);
    if (d == 1) {
      total += log_or_neg_inf(p_reset);
      total += log_or_neg_inf(model.transition.a(sp, s));
      total += log_or_neg_inf(model.actions[s].init_primitive[z]);
    } else if (d == dp + 1 && s == sp) {
      total += log_or_neg_inf(1.0 - p_reset);
      total += log_or_neg_inf(model.actions[s].theta(zp, z));
    } else {
      return neg_inf;  // duration counter must reset or increment
    }
    if (std::isinf(total)) return neg_inf;
    const auto& lds = model.lds[s][z];
    total += log_gaussian(path.x[t], lds.A * path.x[t - 1], lds.Q);
    total += log_gaussian(obs[t], lds.B * path.x[t], lds.R);
  }
  return total;
}

// ---- JSON serialization -------------------------------------------------

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return nlohmann::json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
  const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows)
    throw std::invalid_argument("model file: matrix row count mismatch");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = data.at(i);
    if (static_cast<Eigen::Index>(row.size()) != cols)
      throw std::invalid_argument("model file: matrix column count mismatch");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = row.at(k).get<double>();
  }
  return m;
}

inline nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const auto vals = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(vals.data(),
                                           static_cast<Eigen::Index>(vals.size()));
}

}  // namespace detail

inline nlohmann::json model_to_json(const FullModel& model) {
  nlohmann::json actions = nlohmann::json::array();
  for (int i = 0; i < model.n_actions; ++i) {
    const auto& sub = model.actions[i];
    nlohmann::json lds_list = nlohmann::json::array();
    for (const auto& lds : model.lds[i]) {
      lds_list.push_back({{"A", detail::matrix_to_json(lds.A)},
                          {"B", detail::matrix_to_json(lds.B)},
                          {"Q", detail::matrix_to_json(lds.Q)},
                          {"R", detail::matrix_to_json(lds.R)}});
    }
    actions.push_back(
        {{"theta", detail::matrix_to_json(sub.theta)},
         {"stages",
          {{"n_primitives", sub.stages.n_primitives},
           {"n_stages", sub.stages.n_stages},
           {"g", sub.stages.g}}},
         {"init_primitive", detail::vector_to_json(sub.init_primitive)},
         {"lds", std::move(lds_list)}});
  }
  nlohmann::json omega = nlohmann::json::array();
  for (const auto& per_action : model.duration.omega) {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& w : per_action) per.push_back(detail::vector_to_json(w));
    omega.push_back(std::move(per));
  }
  return nlohmann::json{
      {"version", kModelFormatVersion},
      {"n_actions", model.n_actions},
      {"actions", std::move(actions)},
      {"duration",
       {{"nu", detail::vector_to_json(model.duration.nu)},
        {"beta", detail::vector_to_json(model.duration.beta)},
        {"omega", std::move(omega)}}},
      {"transition", {{"a", detail::matrix_to_json(model.transition.a)}}},
      {"init",
       {{"action", detail::vector_to_json(model.init_action)},
        {"state",
         {{"mean", detail::vector_to_json(model.init_state.mean)},
          {"cov", detail::matrix_to_json(model.init_state.cov)}}}}}};
}

inline FullModel model_from_json(const nlohmann::json& j) {
  const int version = j.at("version").get<int>();
  if (version != kModelFormatVersion)
    throw std::invalid_argument("model file: unsupported version " +
                                std::to_string(version));
  FullModel model;
  model.n_actions = j.at("n_actions").get<int>();
  for (const auto& ja : j.at("actions")) {
    SubstructureModel sub;
    sub.theta = detail::matrix_from_json(ja.at("theta"));
    sub.stages.n_primitives = ja.at("stages").at("n_primitives").get<int>();
    sub.stages.n_stages = ja.at("stages").at("n_stages").get<int>();
    sub.stages.g = ja.at("stages").at("g").get<std::vector<int>>();
    sub.init_primitive = detail::vector_from_json(ja.at("init_primitive"));
    std::vector<LdsParams> lds_list;
    for (const auto& jl : ja.at("lds")) {
      LdsParams lds;
      lds.A = detail::matrix_from_json(jl.at("A"));
      lds.B = detail::matrix_from_json(jl.at("B"));
      lds.Q = detail::matrix_from_json(jl.at("Q"));
      lds.R = detail::matrix_from_json(jl.at("R"));
      lds_list.push_back(std::move(lds));
    }
    model.actions.push_back(std::move(sub));
    model.lds.push_back(std::move(lds_list));
  }
  const auto& jd = j.at("duration");
  model.duration.nu = detail::vector_from_json(jd.at("nu"));
  model.duration.beta = detail::vector_from_json(jd.at("beta"));
  for (const auto& per : jd.at("omega")) {
    std::vector<Eigen::VectorXd> per_action;
    for (const auto& w : per) per_action.push_back(detail::vector_from_json(w));
    model.duration.omega.push_back(std::move(per_action));
  }
  model.transition.a = detail::matrix_from_json(j.at("transition").at("a"));
  model.init_action = detail::vector_from_json(j.at("init").at("action"));
  model.init_state.mean =
      detail::vector_from_json(j.at("init").at("state").at("mean"));
  model.init_state.cov =
      detail::matrix_from_json(j.at("init").at("state").at("cov"));
  return model;
}

inline std::string save_model(const FullModel& model) {
  check_valid(model);
  return model_to_json(model).dump(2);
}

inline FullModel load_model(const std::string& bytes) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("model file: parse error: ") +
                                e.what());
  }
  FullModel model;
  try {
    model = model_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("model file: schema error: ") +
                                e.what());
  }
  check_valid(model);
  return model;
}

}  // namespace sssm
