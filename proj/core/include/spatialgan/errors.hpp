#pragma once

#include <stdexcept>
#include <string>

namespace spatialgan {

// Base class for every error raised by the library. Callers that only need
// to distinguish domain failures from bugs catch this one.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

// Rejection sampling hit its attempt cap.
class SamplingExhausted : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class UnsupportedVersion : public Error {
 public:
  using Error::Error;
};

class ModeConflict : public Error {
 public:
  using Error::Error;
};

class EvaluationEmpty : public Error {
 public:
  using Error::Error;
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(long step, const std::string& what)
      : Error("training diverged at step " + std::to_string(step) + ": " + what), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

}  // namespace spatialgan
