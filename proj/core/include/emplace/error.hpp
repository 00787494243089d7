#pragma once

#include <stdexcept>
#include <string>

namespace emplace {

enum class ErrorKind { config, data, numerical };

/// Base of every error the library raises. The kind maps one-to-one onto
/// the command-line exit codes (2 config, 3 data, 4 numerical).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept;
  const char* kind_name() const noexcept;

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

}  // namespace emplace
