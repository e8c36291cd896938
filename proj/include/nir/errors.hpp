#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace nir {

// Base class for all library errors. Subclasses map onto CLI exit codes:
// IngestError/IoError -> 1, ConfigError -> 2, DivergedError -> 3.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or usage violations (mismatched dimensions, non-scalar loss, ...).
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// Invalid configuration: unknown task, negative weight, bad CFA pattern.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Problems decoding or validating input bursts.
class IngestError : public Error {
 public:
  explicit IngestError(const std::string& msg) : Error(msg) {}
};

// Filesystem / codec failures, always carrying the offending path.
class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

// A forward op produced NaN/Inf. Never propagated silently.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Training hit a non-finite loss; carries the step that diverged.
class DivergedError : public Error {
 public:
  DivergedError(const std::string& msg, std::uint64_t step)
      : Error(msg + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::uint64_t step() const { return step_; }

 private:
  std::uint64_t step_;
};

// Homography denominator fell below the epsilon guard.
class NearSingularError : public Error {
 public:
  explicit NearSingularError(const std::string& msg) : Error(msg) {}
};

}  // namespace nir
