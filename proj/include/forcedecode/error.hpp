#pragma once

#include <stdexcept>
#include <string>

namespace forcedecode {

// Every failure raised by the library derives from Error. The exit code is
// what the command-line front end returns when the exception escapes.
class Error : public std::runtime_error {
 public:
  Error(const std::string& what, int exit_code)
      : std::runtime_error(what), exit_code_(exit_code) {}
  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

// Bad parameters or configuration (exit code 2).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what, 2) {}
};

// Malformed, mismatched or insufficient data (exit code 3).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(what, 3) {}
};

// Singular systems, unstable filters, diverging optimisation (exit code 4).
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(what, 4) {}
};

}  // namespace forcedecode
