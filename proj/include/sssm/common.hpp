#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace sssm {

// Degenerate inputs (empty rows, separated logistic fits, ...) fall back to
// declared defaults instead of aborting; each fallback is reported here.
struct WarningLog {
  std::vector<std::string> messages;
  void add(std::string msg) { messages.push_back(std::move(msg)); }
  bool empty() const { return messages.empty(); }
};

inline void warn(WarningLog* log, const std::string& msg) {
  if (log) log->add(msg);
}

class SingularCovarianceError : public std::runtime_error {
 public:
  explicit SingularCovarianceError(const std::string& what)
      : std::runtime_error(what) {}
};

}  // namespace sssm
