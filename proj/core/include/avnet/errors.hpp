#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace avnet {

// Tensor shapes or channel counts do not line up.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Numeric domain violation, e.g. log of a non-positive value.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Misuse of the autodiff tape (non-scalar loss, double backward, ...).
class AutodiffError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Invalid configuration value or config-file syntax.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// File system or codec failure.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or truncated weight archive.
class ArchiveError : public IoError {
 public:
  using IoError::IoError;
};

// Missing gradient, unknown parameter and similar optimizer/model misuse.
class ParameterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::int64_t step, double loss)
      : std::runtime_error("non-finite loss " + std::to_string(loss) + " at step " +
                           std::to_string(step)),
        step_(step) {}

  std::int64_t step() const { return step_; }

 private:
  std::int64_t step_;
};

}  // namespace avnet
