#pragma once

#include <stdexcept>
#include <string>

namespace flowvo {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : Error {
  using Error::Error;
};

// Raised by estimators when the input admits no usable solution
// (degenerate motion, too few samples, all-zero weights, ...).
struct EstimationError : Error {
  using Error::Error;
};

struct InsufficientDataError : Error {
  using Error::Error;
};

struct PipelineError : Error {
  using Error::Error;
};

}  // namespace flowvo
