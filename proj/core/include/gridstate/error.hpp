#pragma once

#include <stdexcept>
#include <string>

namespace gridstate {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or semantically invalid network case. `location()` names the
/// offending line or JSON field (e.g. "buses[3].kind").
class CaseError : public Error {
 public:
  CaseError(std::string location, const std::string& message)
      : Error(location.empty() ? message : location + ": " + message),
        location_(std::move(location)),
        message_(message) {}

  const std::string& location() const noexcept { return location_; }
  const std::string& message() const noexcept { return message_; }

 private:
  std::string location_;
  std::string message_;
};

/// A linear system that should be nonsingular was not (power-flow Jacobian,
/// WLS gain matrix).
class SingularMatrixError : public Error {
 public:
  using Error::Error;
};

/// The measurement vector has unavailable channels where a complete vector is
/// required.
class MaskedMeasurementError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Pipeline failure attributed to a named stage ("config", "case", "dataset",
/// "train", ...).
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& message)
      : Error("[" + stage + "] " + message), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace gridstate
