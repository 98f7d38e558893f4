#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace brm {

// Error taxonomy mirrors the CLI exit codes: usage/shape problems (2),
// file schema/version problems (3), numerical failures (4).

class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

class ShapeError : public UsageError {
 public:
  explicit ShapeError(const std::string& what) : UsageError(what) {}
};

class SchemaError : public std::runtime_error {
 public:
  explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

class FactorizationError : public NumericError {
 public:
  FactorizationError(const std::string& what, std::size_t pivot)
      : NumericError(what), pivot_(pivot) {}
  std::size_t pivot() const { return pivot_; }

 private:
  std::size_t pivot_;
};

}  // namespace brm
