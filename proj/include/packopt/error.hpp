#pragma once

#include <stdexcept>
#include <string>

namespace packopt {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid mesh topology or geometry.
class MeshError : public Error {
 public:
  using Error::Error;
};

/// Malformed configuration or unknown configuration key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File could not be read, parsed or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A derived quantity is undefined for the given state (e.g. zero packing area).
class MetricError : public Error {
 public:
  using Error::Error;
};

/// Linear or nonlinear solver failure. Carries the last achieved residual.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Krylov iteration hit its iteration cap or broke down.
class LinearSolverError : public SolverError {
 public:
  using SolverError::SolverError;
};

/// Newton residual kept growing after all backtracking halvings.
class NewtonDivergence : public SolverError {
 public:
  using SolverError::SolverError;
};

/// Newton did not reach the requested tolerance within the iteration cap.
class NewtonMaxIterations : public SolverError {
 public:
  using SolverError::SolverError;
};

}  // namespace packopt
