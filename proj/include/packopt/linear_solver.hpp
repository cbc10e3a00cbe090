#pragma once

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "packopt/error.hpp"
#include "packopt/fem.hpp"

namespace packopt {

enum class LinearMethod { Direct, Gmres };
enum class Preconditioner { Jacobi, Ilu };

struct LinearSolverConfig {
  LinearMethod method = LinearMethod::Direct;
  double rel_tol = 1e-8;
  int max_iter = 2000;
  int restart = 60;
  Preconditioner preconditioner = Preconditioner::Ilu;
};

struct LinearSolveReport {
  int iterations = 0;
  double relative_residual = 0.0;
};

namespace detail {

inline double relative_residual(const SparseMatrix& a, const Vector& x, const Vector& b) {
  const double nb = b.norm();
  const double nr = (b - a * x).norm();
  return nb > 0.0 ? nr / nb : nr;
}

/// Right-preconditioned restarted GMRES with Givens rotations.
template <class Precond>
Vector gmres(const SparseMatrix& a, const Vector& b, const Precond& m,
             const LinearSolverConfig& cfg, LinearSolveReport& report) {
  const int n = static_cast<int>(b.size());
  const int restart = std::max(1, std::min(cfg.restart, n));
  const double nb = b.norm();
  Vector x = Vector::Zero(n);
  if (nb == 0.0) {
    report = {0, 0.0};
    return x;
  }
  const double target = cfg.rel_tol * nb;
  int total = 0;
  Eigen::MatrixXd v(n, restart + 1);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(restart + 1, restart);
  Eigen::MatrixXd z(n, restart);
  std::vector<double> cs(restart), sn(restart);
  Vector g(restart + 1);

  Vector r = b - a * x;
  double beta = r.norm();
  while (total < cfg.max_iter) {
    if (beta <= target) break;
    v.col(0) = r / beta;
    g.setZero();
    g[0] = beta;
    h.setZero();
    int k = 0;
    for (; k < restart && total < cfg.max_iter; ++k, ++total) {
      z.col(k) = m.solve(v.col(k));
      Vector w = a * z.col(k);
      for (int i = 0; i <= k; ++i) {  // modified Gram-Schmidt
        h(i, k) = w.dot(v.col(i));
        w -= h(i, k) * v.col(i);
      }
      h(k + 1, k) = w.norm();
      if (!std::isfinite(h(k + 1, k)))
        throw LinearSolverError("GMRES breakdown (non-finite Krylov vector)", beta / nb);
      if (h(k + 1, k) > 0.0) v.col(k + 1) = w / h(k + 1, k);
      for (int i = 0; i < k; ++i) {
        const double t = cs[i] * h(i, k) + sn[i] * h(i + 1, k);
        h(i + 1, k) = -sn[i] * h(i, k) + cs[i] * h(i + 1, k);
        h(i, k) = t;
      }
      const double denom = std::hypot(h(k, k), h(k + 1, k));
      cs[k] = denom > 0.0 ? h(k, k) / denom : 1.0;
      sn[k] = denom > 0.0 ? h(k + 1, k) / denom : 0.0;
      h(k, k) = denom;
      h(k + 1, k) = 0.0;
      g[k + 1] = -sn[k] * g[k];
      g[k] = cs[k] * g[k];
      if (std::abs(g[k + 1]) <= target || h(k, k) == 0.0) {
        ++k;
        ++total;
        break;
      }
    }
    // Back substitution on the k x k triangular system.
    Vector y = Vector::Zero(k);
    for (int i = k - 1; i >= 0; --i) {
      double s = g[i];
      for (int j = i + 1; j < k; ++j) s -= h(i, j) * y[j];
      y[i] = h(i, i) != 0.0 ? s / h(i, i) : 0.0;
    }
    for (int i = 0; i < k; ++i) x += y[i] * z.col(i);
    r = b - a * x;
    const double prev = beta;
    beta = r.norm();
    if (beta > target && beta >= prev) break;  // stagnation over a full cycle
  }
  report.iterations = total;
  report.relative_residual = beta / nb;
  if (beta > target)
    throw LinearSolverError("GMRES did not converge: relative residual " +
                                std::to_string(beta / nb) + " after " +
                                std::to_string(total) + " iterations",
                            beta / nb);
  return x;
}

struct JacobiPreconditioner {
  Vector inv_diag;
  explicit JacobiPreconditioner(const SparseMatrix& a) : inv_diag(a.rows()) {
    const Vector d = a.diagonal();
    for (int i = 0; i < d.size(); ++i) inv_diag[i] = d[i] != 0.0 ? 1.0 / d[i] : 1.0;
  }
  Vector solve(const Vector& v) const { return inv_diag.cwiseProduct(v); }
};

}  // namespace detail

/// Solves A x = b. Every solution is re-verified by explicit multiplication
/// against cfg.rel_tol; failures raise LinearSolverError.
inline Vector solve_linear(const SparseMatrix& a, const Vector& b, const LinearSolverConfig& cfg,
                           LinearSolveReport* report = nullptr) {
  if (a.rows() != a.cols() || a.rows() != b.size())
    throw Error("solve_linear: dimension mismatch");
  if (!(cfg.rel_tol > 0.0 && cfg.rel_tol < 1.0) || cfg.max_iter < 1)
    throw Error("solve_linear: invalid solver configuration");
  LinearSolveReport rep;
  Vector x;
  if (b.norm() == 0.0) {
    x = Vector::Zero(b.size());
  } else if (cfg.method == LinearMethod::Direct) {
    Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
    SparseMatrix ac = a;
    ac.makeCompressed();
    lu.compute(ac);
    if (lu.info() != Eigen::Success)
      throw LinearSolverError("sparse LU factorization failed (singular matrix?)",
                              std::numeric_limits<double>::infinity());
    x = lu.solve(b);
    rep.iterations = 1;
  } else if (cfg.preconditioner == Preconditioner::Jacobi) {
    x = detail::gmres(a, b, detail::JacobiPreconditioner(a), cfg, rep);
  } else {
    Eigen::IncompleteLUT<double> ilu;
    ilu.setDroptol(1e-4);
    ilu.setFillfactor(20);
    ilu.compute(a);
    if (ilu.info() != Eigen::Success)
      throw LinearSolverError("incomplete LU factorization failed",
                              std::numeric_limits<double>::infinity());
    x = detail::gmres(a, b, ilu, cfg, rep);
  }
  rep.relative_residual = detail::relative_residual(a, x, b);
  if (!x.allFinite() || !(rep.relative_residual <= cfg.rel_tol))
    throw LinearSolverError("linear solve missed tolerance: relative residual " +
                                std::to_string(rep.relative_residual),
                            rep.relative_residual);
  if (report) *report = rep;
  return x;
}

}  // namespace packopt
