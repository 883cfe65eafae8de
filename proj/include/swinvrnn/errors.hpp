#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace swinvrnn {

// Base of every error raised by the library. The CLI maps these to a
// nonzero exit code and prints `error[<kind>]: <message>`.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

// A catalog field (variable or level) is missing from an archive or cache.
class CatalogMismatch : public Error {
 public:
  explicit CatalogMismatch(const std::string& what) : Error("catalog-mismatch", what) {}
};

// Inconsistent grid geometry, or a spatial extent an operation cannot handle.
class GeometryError : public Error {
 public:
  explicit GeometryError(const std::string& what) : Error("geometry", what) {}
};

class DegenerateStatistics : public Error {
 public:
  explicit DegenerateStatistics(const std::string& what) : Error("degenerate-statistics", what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("configuration", what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error("shape", what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io", what) {}
};

class InvalidDistribution : public Error {
 public:
  explicit InvalidDistribution(const std::string& what) : Error("invalid-distribution", what) {}
};

class PreconditionError : public Error {
 public:
  explicit PreconditionError(const std::string& what) : Error("precondition", what) {}
};

// Raised when a rollout produces a non-finite value.
class NumericalDivergence : public Error {
 public:
  NumericalDivergence(std::int64_t step, const std::string& what)
      : Error("numerical-divergence", what), step_(step) {}
  std::int64_t step() const noexcept { return step_; }

 private:
  std::int64_t step_;
};

}  // namespace swinvrnn
