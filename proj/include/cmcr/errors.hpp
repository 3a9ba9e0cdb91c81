#pragma once

#include <stdexcept>
#include <string>

namespace cmcr {

// Invalid configuration file or inconsistent parameter set. CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint does not match the active configuration. CLI exit code 3.
class StateMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An iterative numeric routine failed to converge. CLI exit code 4.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss or gradient. CLI exit code 4.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A sub-action targeted an already-masked channel.
class InvalidActionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace cmcr
