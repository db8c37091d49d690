#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace asc {

enum class ErrorKind {
  Dimension,
  InvalidArgument,
  Normalization,
  EnumerationBudget,
  ImpossibleObservation,
  EmptySupport,
  DegenerateWeights,
  NonConvergence,
  NonFinite,
  Parse,
};

const char* to_string(ErrorKind kind);

/// Structured failure carried by every fallible operation in the library.
/// `iteration` and `residual` are populated by iterative solvers.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  Error(ErrorKind kind, const std::string& what, std::size_t iteration, double residual)
      : Error(kind, what) {
    iteration_ = iteration;
    residual_ = residual;
  }

  ErrorKind kind() const { return kind_; }
  std::optional<std::size_t> iteration() const { return iteration_; }
  std::optional<double> residual() const { return residual_; }

 private:
  ErrorKind kind_;
  std::optional<std::size_t> iteration_;
  std::optional<double> residual_;
};

}  // namespace asc
