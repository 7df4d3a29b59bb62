#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sssm/model.hpp"

namespace sssm {

struct SequenceFile {
  ObservationSequence frames;
  std::optional<std::vector<int>> labels;  // per-frame action labels
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

}  // namespace detail

// CSV with header "f0,f1,...[,label]".
inline SequenceFile read_sequence_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open sequence file: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::invalid_argument("empty sequence file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv_line(line);
  bool has_label = !header.empty() && header.back() == "label";
  const int dim = static_cast<int>(header.size()) - (has_label ? 1 : 0);
  for (int k = 0; k < dim; ++k)
    if (header[k] != "f" + std::to_string(k))
      throw std::invalid_argument("bad sequence header in " + path +
                                  ": expected f" + std::to_string(k));
  if (dim < 1)
    throw std::invalid_argument("sequence file has no feature columns: " + path);

  SequenceFile file;
  if (has_label) file.labels.emplace();
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (static_cast<int>(cells.size()) != dim + (has_label ? 1 : 0))
      throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                  ": wrong number of columns");
    Eigen::VectorXd y(dim);
    try {
      for (int k = 0; k < dim; ++k) y[k] = std::stod(cells[k]);
      if (has_label) file.labels->push_back(std::stoi(cells[dim]));
    } catch (const std::exception&) {
      throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                  ": unparseable value");
    }
    if (!y.allFinite())
      throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                  ": non-finite value");
    file.frames.push_back(std::move(y));
  }
  if (file.frames.empty())
    throw std::invalid_argument("sequence file has no frames: " + path);
  return file;
}

inline void write_sequence_csv(const std::string& path,
                               const ObservationSequence& frames,
                               const std::vector<int>* labels = nullptr) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write sequence file: " + path);
  const int dim = static_cast<int>(frames.at(0).size());
  for (int k = 0; k < dim; ++k) out << (k ? "," : "") << "f" << k;
  if (labels) out << ",label";
  out << "\n";
  out.precision(17);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    for (int k = 0; k < dim; ++k) out << (k ? "," : "") << frames[t][k];
    if (labels) out << "," << labels->at(t);
    out << "\n";
  }
}

// Hidden-path sidecar: CSV with header "s,d,z".
inline void write_path_csv(const std::string& path, const HiddenPath& hidden) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write path file: " + path);
  out << "s,d,z\n";
  for (std::size_t t = 0; t < hidden.length(); ++t)
    out << hidden.s[t] << "," << hidden.d[t] << "," << hidden.z[t] << "\n";
}

inline HiddenPath read_path_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open path file: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::invalid_argument("empty path file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  // Extra columns after s,d,z (e.g. posterior probabilities emitted by the
  // segmenter) are accepted and ignored.
  if (line != "s,d,z" && line.rfind("s,d,z,", 0) != 0)
    throw std::invalid_argument("bad path file header in " + path);
  HiddenPath hidden;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() < 3)
      throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                  ": expected at least three columns");
    try {
      hidden.s.push_back(std::stoi(cells[0]));
      hidden.d.push_back(std::stoi(cells[1]));
      hidden.z.push_back(std::stoi(cells[2]));
    } catch (const std::exception&) {
      throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                  ": unparseable value");
    }
  }
  return hidden;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("cannot write file: " + path);
  out << bytes;
}

}  // namespace sssm
