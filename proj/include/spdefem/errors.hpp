#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spdefem {

/// Root of the library's exception hierarchy.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class IndexError : public Error {
 public:
  explicit IndexError(const std::string& msg) : Error(msg) {}
};

class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& msg) : Error(msg) {}
};

class MeshError : public Error {
 public:
  explicit MeshError(const std::string& msg) : Error(msg) {}
};

/// Non-finite function values met during quadrature.
class EvaluationError : public Error {
 public:
  explicit EvaluationError(const std::string& msg) : Error(msg) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& msg) : Error(msg) {}
};

class UnsupportedError : public Error {
 public:
  explicit UnsupportedError(const std::string& msg) : Error(msg) {}
};

/// A trajectory left the admissible range; carries the offending step.
class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& msg, std::size_t step)
      : Error(msg + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class StateError : public Error {
 public:
  explicit StateError(const std::string& msg) : Error(msg) {}
};

class InsufficientDataError : public Error {
 public:
  explicit InsufficientDataError(const std::string& msg) : Error(msg) {}
};

/// Configuration validation failure; `path` is the dotted key path.
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& reason)
      : Error(path + ": " + reason), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace spdefem
