#pragma once

#include <optional>
#include <string>
#include <vector>

#include "packopt/error.hpp"
#include "packopt/linear_solver.hpp"

namespace packopt {

struct NewtonConfig {
  double rel_tol = 1e-5;
  int max_iter = 25;
  int max_backtracks = 8;
  LinearSolverConfig linear;
};

struct NewtonTrace {
  int iterations = 0;
  std::vector<double> residual_norms;  // one entry per evaluated iterate, starting with x0
  std::vector<double> step_lengths;    // damping factor of each accepted step
};

/// Damped Newton iteration on R(x) = 0.
///
/// Converged when ||R(x)|| <= rel_tol * reference, where reference defaults to
/// ||R(x0)||. Steps are halved (at most max_backtracks times) while the
/// residual norm does not decrease. Krylov inner solves use the fixed forcing
/// tolerance 1e-2 * rel_tol.
template <class ResidualFn, class JacobianFn>
NewtonTrace newton_solve(ResidualFn&& residual, JacobianFn&& jacobian, Vector& x,
                         const NewtonConfig& cfg, std::optional<double> reference = std::nullopt) {
  NewtonTrace trace;
  Vector r = residual(x);
  double norm = r.norm();
  trace.residual_norms.push_back(norm);
  const double ref = reference.value_or(norm);
  const double target = cfg.rel_tol * ref;
  if (!std::isfinite(norm)) throw NewtonDivergence("non-finite initial residual", norm);

  LinearSolverConfig lin = cfg.linear;
  if (lin.method == LinearMethod::Gmres) lin.rel_tol = std::min(lin.rel_tol, 1e-2 * cfg.rel_tol);

  while (norm > target) {
    if (trace.iterations >= cfg.max_iter)
      throw NewtonMaxIterations("Newton reached " + std::to_string(cfg.max_iter) +
                                    " iterations, relative residual " + std::to_string(norm / ref),
                                norm / ref);
    const SparseMatrix j = jacobian(x);
    const Vector dx = solve_linear(j, Vector(-r), lin);
    double t = 1.0;
    Vector trial;
    Vector r_trial;
    double trial_norm = 0.0;
    int halvings = 0;
    for (;;) {
      trial = x + t * dx;
      r_trial = residual(trial);
      trial_norm = r_trial.norm();
      if (std::isfinite(trial_norm) && trial_norm < norm) break;
      if (halvings == cfg.max_backtracks)
        throw NewtonDivergence("Newton residual did not decrease after " +
                                   std::to_string(cfg.max_backtracks) + " halvings",
                               norm / ref);
      t *= 0.5;
      ++halvings;
    }
    x = std::move(trial);
    r = std::move(r_trial);
    norm = trial_norm;
    ++trace.iterations;
    trace.residual_norms.push_back(norm);
    trace.step_lengths.push_back(t);
  }
  return trace;
}

}  // namespace packopt
