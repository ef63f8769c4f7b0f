// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace dpgp {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument: non-positive parameter, empty input, dimension mismatch.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// SPD factorization failed even after jitter escalation.
class ConditioningError : public Error {
 public:
  ConditioningError(const std::string& what, std::vector<double> jitter_levels)
      : Error(what), jitter_levels_(std::move(jitter_levels)) {}

  const std::vector<double>& jitter_levels() const { return jitter_levels_; }

 private:
  std::vector<double> jitter_levels_;
};

/// Non-finite values produced during simulation or inference.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IngestionError : public Error {
 public:
  using Error::Error;
};

/// Model file could not be read; the message carries the offending section
/// or field path.
class ModelLoadError : public Error {
 public:
  using Error::Error;
};

}  // namespace dpgp
