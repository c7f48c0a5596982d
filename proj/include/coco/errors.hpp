#pragma once

#include <stdexcept>
#include <string>

namespace coco {

struct CocoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : CocoError {
  using CocoError::CocoError;
};
struct SplitError : CocoError {
  using CocoError::CocoError;
};
struct SampleError : CocoError {
  using CocoError::CocoError;
};
struct ShapeError : CocoError {
  using CocoError::CocoError;
};
struct DomainError : CocoError {
  using CocoError::CocoError;
};
struct OptimError : CocoError {
  using CocoError::CocoError;
};
struct FitError : CocoError {
  using CocoError::CocoError;
};
struct StateError : CocoError {
  using CocoError::CocoError;
};
struct BatchError : CocoError {
  using CocoError::CocoError;
};
struct ConfigError : CocoError {
  using CocoError::CocoError;
};
struct IoError : CocoError {
  using CocoError::CocoError;
};

// Raised when the training loop hits a non-finite loss; carries the step at
// which it happened.
struct TrainDiverged : CocoError {
  TrainDiverged(long long step, const std::string& what_arg)
      : CocoError("training diverged at step " + std::to_string(step) + ": " + what_arg),
        step_index(step) {}
  long long step_index;
};

}  // namespace coco
