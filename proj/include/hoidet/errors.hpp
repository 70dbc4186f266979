#pragma once

#include <stdexcept>
#include <string>

namespace hoidet {

// Failures carry a precise category so callers (and the CLI exit-code map)
// can tell argument errors from numeric errors from I/O.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeMismatch : Error {
  explicit ShapeMismatch(const std::string& msg) : Error("shape mismatch: " + msg) {}
};

struct BadShape : Error {
  explicit BadShape(const std::string& msg) : Error("bad shape: " + msg) {}
};

struct InvalidRate : Error {
  explicit InvalidRate(const std::string& msg) : Error("invalid rate: " + msg) {}
};

struct InfeasibleMatrix : Error {
  explicit InfeasibleMatrix(const std::string& msg) : Error("infeasible matrix: " + msg) {}
};

struct InvalidConfig : Error {
  explicit InvalidConfig(const std::string& msg) : Error("invalid config: " + msg) {}
};

struct NonPositiveVariance : Error {
  explicit NonPositiveVariance(const std::string& msg) : Error("non-positive variance: " + msg) {}
};

struct InvalidProfile : Error {
  explicit InvalidProfile(const std::string& msg) : Error("invalid profile: " + msg) {}
};

struct NonFiniteLoss : Error {
  explicit NonFiniteLoss(const std::string& msg) : Error("non-finite loss: " + msg) {}
};

struct EmptyTestSet : Error {
  explicit EmptyTestSet(const std::string& msg) : Error("empty test set: " + msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error("i/o error: " + msg) {}
};

}  // namespace hoidet
