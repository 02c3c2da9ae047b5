#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fgan {

// Base of every error the library throws. `code()` is a short machine-readable
// tag used by the CLI when it prints `error: <code>: <message>`.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& m) : Error("dimension", m) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& m) : Error("config", m) {}
};

class GraphError : public Error {
 public:
  explicit GraphError(const std::string& m) : Error("graph", m) {}
};

class ArchitectureError : public Error {
 public:
  explicit ArchitectureError(const std::string& m) : Error("architecture", m) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& m) : Error("data", m) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& m) : Error("io", m) {}
};

class CheckpointError : public Error {
 public:
  explicit CheckpointError(const std::string& m) : Error("checkpoint", m) {}
};

class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& m) : Error("diverged", m) {}
};

}  // namespace fgan
