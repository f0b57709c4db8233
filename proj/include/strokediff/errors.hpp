#pragma once

#include <stdexcept>
#include <string>

namespace strokediff {

// Root of every domain failure raised by the library. The CLI maps any
// Error to exit code 1 and the service maps subclasses to HTTP statuses.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text (sketch files, JSON payloads).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Well-formed input holding values outside the domain (NaN, bad pen bits).
class DataError : public Error {
 public:
  using Error::Error;
};

// Sketch geometry that cannot be resampled or normalized.
class PreprocessError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Violated call precondition (shape mismatch, step ordering).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Object used before it holds usable state (e.g. an estimator with no weights).
class StateError : public Error {
 public:
  using Error::Error;
};

// Operation needs a different conditioning mode than the checkpoint has.
class ModeError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

// Evaluation harness could not establish a trustworthy instrument.
class HarnessError : public Error {
 public:
  using Error::Error;
};

class GradientCheckError : public Error {
 public:
  using Error::Error;
};

}  // namespace strokediff
