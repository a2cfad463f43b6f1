#pragma once

#include <stdexcept>
#include <string>

namespace sgsasr {

/// Invalid argument shapes, ranges or channel counts.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Inconsistent configuration, or a missing/unreadable model file.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Empty dataset or unreadable dataset member.
class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a checkpoint manifest declares an unsupported format version.
class VersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

/// Non-finite loss during optimization.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sgsasr
