// sssm: simulate, train, segment, eval, bench, inspect.
//
// Exit codes: 0 success, 2 data error, 3 model/validation error, 64 usage.

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "sssm/bench.hpp"
#include "sssm/io.hpp"
#include "sssm/metrics.hpp"
#include "sssm/model.hpp"
#include "sssm/rbpf.hpp"
#include "sssm/train.hpp"

namespace {

constexpr int kExitData = 2;
constexpr int kExitModel = 3;
constexpr int kExitUsage = 64;

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

sssm::FullModel load_model_or_data_error(const std::string& path) {
  nlohmann::json j;
  try {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    in >> j;
  } catch (const std::exception& e) {
    throw DataError(std::string("model file: ") + e.what());
  }
  sssm::FullModel model;
  try {
    model = sssm::model_from_json(j);
  } catch (const std::exception& e) {
    throw DataError(std::string("model file ") + path + ": " + e.what());
  }
  const auto violations = sssm::validate(model);
  if (!violations.empty()) {
    std::string report = "model validation failed for " + path + ":";
    for (const auto& v : violations) report += "\n  - " + v;
    throw DataError(report);
  }
  return model;
}

void print_warnings(const sssm::WarningLog& log) {
  for (const auto& m : log.messages) std::cerr << "warning: " << m << "\n";
}

nlohmann::json json_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  return j;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << text;
}

// --- simulate ---------------------------------------------------------------

struct SimulateArgs {
  std::string model_path, out_dir;
  int frames = 0, count = 1;
  std::uint64_t seed = 0;
};

void cmd_simulate(const SimulateArgs& a) {
  const sssm::FullModel model = load_model_or_data_error(a.model_path);
  std::filesystem::create_directories(a.out_dir);
  for (int k = 0; k < a.count; ++k) {
    const auto [path, obs] =
        sssm::sample_sequence(model, a.frames, sssm::splitmix64(a.seed) + k);
    const std::string stem =
        (std::filesystem::path(a.out_dir) / ("seq_" + std::to_string(k)))
            .string();
    sssm::write_sequence_csv(stem + ".csv", obs, &path.s);
    sssm::write_path_csv(stem + "_path.csv", path);
  }
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  std::string data_dir, config_path, out_path;
  std::uint64_t seed = 0;
};

void cmd_train(const TrainArgs& a) {
  sssm::TrainingConfig cfg;
  if (!a.config_path.empty()) {
    const nlohmann::json j = json_from_file(a.config_path);
    if (j.contains("n_primitives")) cfg.n_primitives = j.at("n_primitives");
    if (j.contains("n_stages")) cfg.n_stages = j.at("n_stages");
    if (j.contains("alpha")) cfg.alpha = j.at("alpha");
    if (j.contains("max_em_iters")) cfg.max_em_iters = j.at("max_em_iters");
    if (j.contains("em_tol")) cfg.em_tol = j.at("em_tol");
    if (j.contains("fit_dbm")) cfg.fit_dbm = j.at("fit_dbm");
  }
  cfg.seed = a.seed;
  try {
    cfg.check_valid();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }

  std::vector<std::filesystem::path> files;
  try {
    for (const auto& entry : std::filesystem::directory_iterator(a.data_dir))
      if (entry.is_regular_file() && entry.path().extension() == ".csv" &&
          entry.path().filename().string().find("_path") == std::string::npos)
        files.push_back(entry.path());
  } catch (const std::exception& e) {
    throw DataError(std::string("data directory: ") + e.what());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no sequence files in " + a.data_dir);

  sssm::LabeledDataset dataset;
  for (const auto& f : files) {
    sssm::SequenceFile seq;
    try {
      seq = sssm::read_sequence_csv(f.string());
    } catch (const std::exception& e) {
      throw DataError(e.what());
    }
    if (!seq.labels)
      throw DataError("missing label column in " + f.string());
    dataset.sequences.emplace_back(std::move(seq.frames),
                                   std::move(*seq.labels));
  }

  sssm::WarningLog log;
  sssm::TrainingSummary summary;
  sssm::FullModel model;
  try {
    model = sssm::train(dataset, cfg, &log, &summary);
  } catch (const std::exception& e) {
    throw DataError(std::string("training: ") + e.what());
  }
  print_warnings(log);
  const auto violations = sssm::validate(model);
  if (!violations.empty()) {
    std::string report = "trained model failed validation:";
    for (const auto& v : violations) report += "\n  - " + v;
    throw ModelError(report);
  }
  write_text(a.out_path, sssm::save_model(model) + "\n");

  nlohmann::json js{{"em_curve", summary.em_curve},
                    {"theta_sparsity", summary.theta_sparsity},
                    {"n_warnings", log.messages.size()},
                    {"model_path", a.out_path}};
  std::cout << js.dump(2) << "\n";
}

// --- segment ----------------------------------------------------------------

struct SegmentArgs {
  std::string model_path, input_path, out_path;
  int particles = 200;
  bool refine = true;
  std::uint64_t seed = 0;
};

void cmd_segment(const SegmentArgs& a) {
  const sssm::FullModel model = load_model_or_data_error(a.model_path);
  sssm::SequenceFile seq;
  try {
    seq = sssm::read_sequence_csv(a.input_path);
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
  if (static_cast<int>(seq.frames[0].size()) != model.obs_dim())
    throw DataError("input dimension " + std::to_string(seq.frames[0].size()) +
                    " does not match model observation dimension " +
                    std::to_string(model.obs_dim()));

  sssm::WarningLog log;
  sssm::FilterOptions opts;
  opts.log = &log;
  const sssm::FilterState state =
      sssm::run_filter(model, seq.frames, a.particles, a.seed, opts);
  sssm::HiddenPath labels = sssm::extract_labels(state);
  if (a.refine)
    labels = sssm::refine_boundaries(model, seq.frames, labels);
  print_warnings(log);

  std::ostringstream out;
  out << "s,d,z";
  for (int i = 0; i < model.n_actions; ++i) out << ",p" << i;
  out << "\n";
  out.precision(17);
  for (std::size_t t = 0; t < labels.length(); ++t) {
    out << labels.s[t] << "," << labels.d[t] << "," << labels.z[t];
    const Eigen::VectorXd post = state.history[t].action_marginal();
    for (int i = 0; i < model.n_actions; ++i) out << "," << post[i];
    out << "\n";
  }
  write_text(a.out_path, out.str());
}

// --- eval -------------------------------------------------------------------

void cmd_eval(const std::string& pred_path, const std::string& truth_path) {
  sssm::HiddenPath pred, truth;
  try {
    pred = sssm::read_path_csv(pred_path);
    truth = sssm::read_path_csv(truth_path);
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
  if (pred.length() != truth.length())
    throw DataError("length mismatch: " + std::to_string(pred.length()) +
                    " vs " + std::to_string(truth.length()));
  int n_classes = 0;
  for (int v : pred.s) n_classes = std::max(n_classes, v + 1);
  for (int v : truth.s) n_classes = std::max(n_classes, v + 1);

  nlohmann::json js{
      {"accuracy", sssm::per_frame_accuracy(pred.s, truth.s)},
      {"confusion", sssm::detail::matrix_to_json(
                        sssm::confusion_matrix(pred.s, truth.s, n_classes))},
      {"boundary_offset", sssm::boundary_offset(pred.s, truth.s)}};
  std::cout << js.dump(2) << "\n";
}

// --- bench ------------------------------------------------------------------

struct BenchArgs {
  std::string scenario_path, out_path;
  int n_train = 0, n_test = 0, t_max = 0, particles = 200;
  std::vector<std::string> variants;
  std::uint64_t seed = 0;
};

void cmd_bench(const BenchArgs& a) {
  sssm::Scenario scenario;
  try {
    scenario = sssm::scenario_from_json(json_from_file(a.scenario_path));
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(std::string("scenario: ") + e.what());
  }
  sssm::BenchmarkConfig cfg;
  cfg.n_train = a.n_train;
  cfg.n_test = a.n_test;
  cfg.t_max = a.t_max;
  cfg.n_particles = a.particles;
  cfg.seed = a.seed;
  if (!a.variants.empty()) {
    cfg.variants.clear();
    for (const auto& name : a.variants) {
      try {
        cfg.variants.push_back(sssm::variant_from_name(name));
      } catch (const std::exception& e) {
        throw UsageError(e.what());
      }
    }
  }
  sssm::WarningLog log;
  const sssm::BenchmarkReport report = sssm::run_benchmark(cfg, scenario, &log);
  print_warnings(log);
  std::cout << sssm::report_to_tsv(report);
  if (!a.out_path.empty())
    write_text(a.out_path, sssm::report_to_json(report).dump(2) + "\n");
}

// --- inspect ----------------------------------------------------------------

void print_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out << "   ";
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      char buf[16];
      std::snprintf(buf, sizeof buf, " %7.4f", m(i, j));
      out << buf;
    }
    out << "\n";
  }
}

void inspect_action(std::ostream& out, const sssm::FullModel& model, int i) {
  const auto& sub = model.actions[i];
  const auto& stages = sub.stages;
  const int n = stages.n_primitives;
  out << "action " << i << " (" << n << " primitives, " << stages.n_stages
      << " stages, g = [";
  for (int z = 0; z < n; ++z) out << (z ? " " : "") << stages.g[z];
  out << "])\n";

  out << "  theta zero pattern ('#' nonzero, '.' zero; '|'/'-' stage blocks):\n";
  for (int r = 0; r < n; ++r) {
    if (r > 0 && stages.g[r] != stages.g[r - 1]) {
      out << "   ";
      for (int c = 0; c < n; ++c) {
        if (c > 0 && stages.g[c] != stages.g[c - 1]) out << "+";
        out << "-";
      }
      out << "\n";
    }
    out << "   ";
    for (int c = 0; c < n; ++c) {
      if (c > 0 && stages.g[c] != stages.g[c - 1]) out << "|";
      out << (sub.theta(r, c) > 0.0 ? '#' : '.');
    }
    out << "\n";
  }

  out << "  phi (stage marginal):\n";
  print_matrix(out, sssm::stage_marginal(sub.theta, stages));

  const double nu = model.duration.nu[i];
  const double beta = model.duration.beta[i];
  const int tau_max = std::max(1, static_cast<int>(std::ceil(50.0 * beta)));
  const Eigen::VectorXd pmf = sssm::duration_pmf(nu, beta, tau_max);
  Eigen::Index mode;
  pmf.maxCoeff(&mode);
  out << "  duration: nu = " << nu << ", beta = " << beta
      << ", pmf mode = " << (mode + 1) << " frames\n";
  out << "  |omega| per primitive:";
  for (int z = 0; z < n; ++z)
    out << " " << model.duration.omega_at(i, z).norm();
  out << "\n";
}

void cmd_inspect(const std::string& model_path, int action) {
  const sssm::FullModel model = load_model_or_data_error(model_path);
  if (action >= model.n_actions)
    throw UsageError("action index " + std::to_string(action) +
                     " out of range (model has " +
                     std::to_string(model.n_actions) + " actions)");
  std::ostringstream out;
  out << "model: " << model.n_actions << " actions, state dim "
      << model.state_dim() << ", observation dim " << model.obs_dim() << "\n";
  if (action >= 0) {
    inspect_action(out, model, action);
  } else {
    for (int i = 0; i < model.n_actions; ++i) inspect_action(out, model, i);
    out << "action transition matrix a:\n";
    print_matrix(out, model.transition.a);
  }
  std::cout << out.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Substructured switching-LDS sequence segmentation"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Sample sequences from a model");
  c_sim->add_option("--model", sim.model_path, "Model JSON file")->required();
  c_sim->add_option("--frames", sim.frames, "Frames per sequence")
      ->required()
      ->check(CLI::PositiveNumber);
  c_sim->add_option("--count", sim.count, "Number of sequences")
      ->check(CLI::PositiveNumber);
  c_sim->add_option("--seed", sim.seed, "Random seed");
  c_sim->add_option("--out", sim.out_dir, "Output directory")->required();

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Train a model on labeled data");
  c_tr->add_option("--data", tr.data_dir, "Directory of labeled sequence CSVs")
      ->required();
  c_tr->add_option("--config", tr.config_path, "Training config JSON");
  c_tr->add_option("--seed", tr.seed, "Random seed");
  c_tr->add_option("--out", tr.out_path, "Output model JSON")->required();

  SegmentArgs seg;
  auto* c_seg = app.add_subcommand("segment", "Segment a sequence");
  c_seg->add_option("--model", seg.model_path, "Model JSON file")->required();
  c_seg->add_option("--input", seg.input_path, "Sequence CSV")->required();
  c_seg->add_option("--particles", seg.particles, "Particle count")
      ->check(CLI::PositiveNumber);
  c_seg->add_flag("--refine,!--no-refine", seg.refine,
                  "Offline boundary refinement (default on)");
  c_seg->add_option("--seed", seg.seed, "Random seed");
  c_seg->add_option("--out", seg.out_path, "Output label CSV")->required();

  std::string ev_pred, ev_truth;
  auto* c_ev = app.add_subcommand("eval", "Compare predicted labels to truth");
  c_ev->add_option("--pred", ev_pred, "Predicted path CSV")->required();
  c_ev->add_option("--truth", ev_truth, "Ground-truth path CSV")->required();

  BenchArgs bn;
  auto* c_bn = app.add_subcommand("bench", "Run a synthetic benchmark");
  c_bn->add_option("--scenario", bn.scenario_path, "Scenario JSON file")
      ->required();
  c_bn->add_option("--n-train", bn.n_train, "Training sequences (0: default)");
  c_bn->add_option("--n-test", bn.n_test, "Test sequences (0: default)");
  c_bn->add_option("--t-max", bn.t_max, "Frames per sequence (0: default)");
  c_bn->add_option("--variants", bn.variants,
                   "Variants: SLDS STM DBM STM+DBM (default all)");
  c_bn->add_option("--particles", bn.particles, "Particle count")
      ->check(CLI::PositiveNumber);
  c_bn->add_option("--seed", bn.seed, "Random seed");
  c_bn->add_option("--out", bn.out_path, "Report JSON path");

  std::string ins_model;
  int ins_action = -1;
  auto* c_ins = app.add_subcommand("inspect", "Dump model parameters");
  c_ins->add_option("--model", ins_model, "Model JSON file")->required();
  c_ins->add_option("--action", ins_action, "Restrict to one action index")
      ->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (c_sim->parsed()) cmd_simulate(sim);
    if (c_tr->parsed()) cmd_train(tr);
    if (c_seg->parsed()) cmd_segment(seg);
    if (c_ev->parsed()) cmd_eval(ev_pred, ev_truth);
    if (c_bn->parsed()) cmd_bench(bn);
    if (c_ins->parsed()) cmd_inspect(ins_model, ins_action);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const ModelError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitModel;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitModel;
  }
  return 0;
}
