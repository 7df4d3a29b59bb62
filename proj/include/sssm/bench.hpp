#pragma once

#include <chrono>
#include <json.hpp>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sssm/common.hpp"
#include "sssm/metrics.hpp"
#include "sssm/model.hpp"
#include "sssm/rbpf.hpp"
#include "sssm/train.hpp"

namespace sssm {

enum class Variant { kSlds, kStm, kDbm, kStmDbm };

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kSlds: return "SLDS";
    case Variant::kStm: return "STM";
    case Variant::kDbm: return "DBM";
    case Variant::kStmDbm: return "STM+DBM";
  }
  throw std::invalid_argument("variant_name: unknown variant");
}

inline Variant variant_from_name(const std::string& name) {
  if (name == "SLDS") return Variant::kSlds;
  if (name == "STM") return Variant::kStm;
  if (name == "DBM") return Variant::kDbm;
  if (name == "STM+DBM") return Variant::kStmDbm;
  throw std::invalid_argument("unknown variant: " + name);
}

// A generator preset: ground-truth model plus the training configuration the
// full (STM+DBM) variant uses.
struct Scenario {
  std::string name;
  FullModel model;
  TrainingConfig train;
  int default_n_train = 20;
  int default_n_test = 5;
  int default_t_max = 240;
};

inline Scenario scenario_from_json(const nlohmann::json& j) {
  Scenario sc;
  sc.name = j.at("name").get<std::string>();
  sc.model = model_from_json(j.at("model"));
  check_valid(sc.model);
  if (j.contains("train")) {
    const auto& jt = j.at("train");
    if (jt.contains("n_primitives"))
      sc.train.n_primitives = jt.at("n_primitives").get<int>();
    if (jt.contains("n_stages")) sc.train.n_stages = jt.at("n_stages").get<int>();
    if (jt.contains("alpha")) sc.train.alpha = jt.at("alpha").get<double>();
    if (jt.contains("max_em_iters"))
      sc.train.max_em_iters = jt.at("max_em_iters").get<int>();
  }
  if (j.contains("defaults")) {
    const auto& jd = j.at("defaults");
    if (jd.contains("n_train")) sc.default_n_train = jd.at("n_train").get<int>();
    if (jd.contains("n_test")) sc.default_n_test = jd.at("n_test").get<int>();
    if (jd.contains("t_max")) sc.default_t_max = jd.at("t_max").get<int>();
  }
  return sc;
}

struct BenchmarkConfig {
  int n_train = 0;  // 0: scenario default
  int n_test = 0;
  int t_max = 0;
  std::vector<Variant> variants = {Variant::kSlds, Variant::kStm, Variant::kDbm,
                                   Variant::kStmDbm};
  int n_particles = 200;
  int refine_window = 40;
  std::uint64_t seed = 0;
};

struct VariantResult {
  std::string variant;
  double accuracy = 0.0;
  Eigen::MatrixXd confusion;
  double mean_boundary_offset = 0.0;
  double wall_clock_per_frame_ms = 0.0;
};

struct BenchmarkReport {
  std::string scenario;
  std::uint64_t seed = 0;
  int n_train = 0, n_test = 0, t_max = 0, n_particles = 0;
  std::vector<VariantResult> results;

  const VariantResult& result(Variant v) const {
    for (const auto& r : results)
      if (r.variant == variant_name(v)) return r;
    throw std::invalid_argument("report: variant not present");
  }
};

inline TrainingConfig variant_config(Variant v, const TrainingConfig& full) {
  TrainingConfig cfg = full;
  switch (v) {
    case Variant::kSlds:
      cfg.n_primitives = 1;
      cfg.n_stages = 1;
      cfg.fit_dbm = false;
      break;
    case Variant::kStm:
      cfg.fit_dbm = false;
      break;
    case Variant::kDbm:
      cfg.n_primitives = 1;
      cfg.n_stages = 1;
      cfg.fit_dbm = true;
      break;
    case Variant::kStmDbm:
      cfg.fit_dbm = true;
      break;
  }
  return cfg;
}

inline BenchmarkReport run_benchmark(const BenchmarkConfig& config,
                                     const Scenario& scenario,
                                     WarningLog* log = nullptr) {
  const int n_train = config.n_train > 0 ? config.n_train : scenario.default_n_train;
  const int n_test = config.n_test > 0 ? config.n_test : scenario.default_n_test;
  const int t_max = config.t_max > 0 ? config.t_max : scenario.default_t_max;
  if (n_train < 1 || n_test < 1 || t_max < 1 || config.n_particles < 1)
    throw std::invalid_argument("run_benchmark: counts must be >= 1");

  LabeledDataset train_set;
  for (int k = 0; k < n_train; ++k) {
    auto [path, obs] = sample_sequence(scenario.model, t_max,
                                       splitmix64(config.seed) + 2 * k);
    train_set.sequences.emplace_back(std::move(obs), std::move(path.s));
  }
  std::vector<std::pair<ObservationSequence, std::vector<int>>> test_set;
  for (int k = 0; k < n_test; ++k) {
    auto [path, obs] = sample_sequence(
        scenario.model, t_max, splitmix64(config.seed ^ 0x7e57ull) + 2 * k + 1);
    test_set.emplace_back(std::move(obs), std::move(path.s));
  }

  BenchmarkReport report;
  report.scenario = scenario.name;
  report.seed = config.seed;
  report.n_train = n_train;
  report.n_test = n_test;
  report.t_max = t_max;
  report.n_particles = config.n_particles;

  for (Variant v : config.variants) {
    TrainingConfig cfg = variant_config(v, scenario.train);
    cfg.seed = config.seed;
    FullModel model;
    try {
      model = train(train_set, cfg, log);
    } catch (const std::exception& e) {
      throw std::runtime_error("run_benchmark: training " + variant_name(v) +
                               " failed: " + e.what());
    }

    VariantResult res;
    res.variant = variant_name(v);
    res.confusion =
        Eigen::MatrixXd::Zero(scenario.model.n_actions, scenario.model.n_actions);
    double acc_total = 0.0, offset_total = 0.0;
    long frames = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t k = 0; k < test_set.size(); ++k) {
      const auto& [obs, truth] = test_set[k];
      FilterOptions opts;
      opts.log = log;
      const FilterState state = run_filter(
          model, obs, config.n_particles, splitmix64(config.seed ^ (0xF117 + k)),
          opts);
      HiddenPath pred = extract_labels(state);
      if (config.refine_window > 0)
        pred = refine_boundaries(model, obs, pred, config.refine_window);
      acc_total += per_frame_accuracy(pred.s, truth) * truth.size();
      offset_total += boundary_offset(pred.s, truth);
      res.confusion += confusion_matrix(pred.s, truth, scenario.model.n_actions);
      frames += static_cast<long>(truth.size());
    }
    const auto t1 = std::chrono::steady_clock::now();
    res.accuracy = acc_total / static_cast<double>(frames);
    res.mean_boundary_offset = offset_total / static_cast<double>(test_set.size());
    res.wall_clock_per_frame_ms =
        std::chrono::duration<double, std::milli>(t1 - t0).count() /
        static_cast<double>(frames);
    report.results.push_back(std::move(res));
  }
  return report;
}

inline nlohmann::json report_to_json(const BenchmarkReport& report) {
  nlohmann::json results = nlohmann::json::array();
  for (const auto& r : report.results) {
    results.push_back({{"variant", r.variant},
                       {"accuracy", r.accuracy},
                       {"confusion", detail::matrix_to_json(r.confusion)},
                       {"mean_boundary_offset", r.mean_boundary_offset},
                       {"wall_clock_per_frame_ms", r.wall_clock_per_frame_ms}});
  }
  return nlohmann::json{{"scenario", report.scenario},
                        {"seed", report.seed},
                        {"n_train", report.n_train},
                        {"n_test", report.n_test},
                        {"t_max", report.t_max},
                        {"n_particles", report.n_particles},
                        {"results", std::move(results)}};
}

// variant x metric table for external plotting.
inline std::string report_to_tsv(const BenchmarkReport& report) {
  std::ostringstream out;
  out << "variant\taccuracy\tmean_boundary_offset\twall_clock_per_frame_ms\n";
  out.precision(6);
  for (const auto& r : report.results)
    out << r.variant << "\t" << r.accuracy << "\t" << r.mean_boundary_offset
        << "\t" << r.wall_clock_per_frame_ms << "\n";
  return out.str();
}

}  // namespace sssm
