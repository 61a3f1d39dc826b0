#pragma once

#include <stdexcept>
#include <string>

namespace uadrs {

// Exit codes used by the CLI: 0 success, 2 config, 3 data, 4 numerical.
enum class ExitCode : int {
  ok = 0,
  failure = 1,
  config = 2,
  data = 3,
  numerical = 4,
};

class Error : public std::runtime_error {
 public:
  Error(std::string msg, ExitCode code)
      : std::runtime_error(std::move(msg)), code_(code) {}
  ExitCode exit_code() const { return code_; }

 private:
  ExitCode code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(std::string msg)
      : Error(std::move(msg), ExitCode::config) {}
};

class DataError : public Error {
 public:
  explicit DataError(std::string msg)
      : Error(std::move(msg), ExitCode::data) {}
};

class DatasetNotFoundError : public DataError {
 public:
  explicit DatasetNotFoundError(std::string msg)
      : DataError(std::move(msg)) {}
};

class IngestionError : public DataError {
 public:
  explicit IngestionError(std::string msg) : DataError(std::move(msg)) {}
};

class SchemaError : public DataError {
 public:
  explicit SchemaError(std::string msg) : DataError(std::move(msg)) {}
};

class ValidationError : public DataError {
 public:
  explicit ValidationError(std::string msg) : DataError(std::move(msg)) {}
};

class InsufficientDataError : public DataError {
 public:
  explicit InsufficientDataError(std::string msg)
      : DataError(std::move(msg)) {}
};

class IntegrityError : public DataError {
 public:
  explicit IntegrityError(std::string msg) : DataError(std::move(msg)) {}
};

class IoError : public DataError {
 public:
  explicit IoError(std::string msg) : DataError(std::move(msg)) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(std::string msg)
      : Error(std::move(msg), ExitCode::failure) {}
};

class RangeError : public Error {
 public:
  explicit RangeError(std::string msg)
      : Error(std::move(msg), ExitCode::failure) {}
};

class StateError : public Error {
 public:
  explicit StateError(std::string msg)
      : Error(std::move(msg), ExitCode::failure) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(std::string msg)
      : Error(std::move(msg), ExitCode::numerical) {}
};

class TrainingError : public NumericalError {
 public:
  explicit TrainingError(std::string msg)
      : NumericalError(std::move(msg)) {}
};

class CompatibilityError : public Error {
 public:
  explicit CompatibilityError(std::string msg)
      : Error(std::move(msg), ExitCode::config) {}
};

}  // namespace uadrs
