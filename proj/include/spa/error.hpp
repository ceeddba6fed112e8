#pragma once

#include <stdexcept>
#include <string>

namespace spa {

enum class ErrorKind {
  invalid_argument,
  dimension,
  symmetry,
  convergence,
  index,
  insufficient_memory,
  insufficient_class,
  parse,
  io,
  config,
  divergence,
};

// Single exception type for the library; `kind()` lets callers (the CLI in
// particular) map failures onto exit codes without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace spa
