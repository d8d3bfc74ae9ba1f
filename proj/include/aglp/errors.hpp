#pragma once

#include <stdexcept>
#include <string>

namespace aglp {

// Invalid configuration or dataset parameters, detected before any work.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Training failed mid-run (non-finite loss, inconsistent state).
class TrainingAbort : public std::runtime_error {
 public:
  explicit TrainingAbort(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace aglp
