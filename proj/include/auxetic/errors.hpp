#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace auxetic {

enum class ErrorKind {
  InvalidGeometry,
  DisconnectedMesh,
  SingularElement,
  NonConvergence,
  DegenerateCell,
  ExhaustedSampler,
  InsufficientLabels,
  ShapeMismatch,
  NonFiniteLoss,
  ZeroVariance,
  InvalidConfig,
  GridMismatch,
  LengthMismatch,
  Io,
};

std::string_view to_string(ErrorKind kind);

/// Base exception for every failure raised by the library. The kind is
/// stable and is what the CLI reports in its error JSON.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised when Newton iterations fail after the bisection budget is spent.
class NonConvergence : public Error {
 public:
  NonConvergence(std::size_t step, double residual, const std::string& message)
      : Error(ErrorKind::NonConvergence, message), step_(step), residual_(residual) {}

  std::size_t step() const noexcept { return step_; }
  double residual() const noexcept { return residual_; }

 private:
  std::size_t step_;
  double residual_;
};

}  // namespace auxetic
