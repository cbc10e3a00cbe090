#pragma once

// Stabilized convection-diffusion for the transferred scalar:
//
//   D (grad c, grad w) + (u.grad c, w)
//   + sum_K tau_c (u.grad c, u.grad w)_K                      (SUPG)
//   + sum_K D_cw ((I - u u^T/|u|^2) grad c, grad w)_K        (crosswind)
//
// with D_cw = max(0, C h |u_K| / 2 - D). c = c_in on the inlet and c = c_pack
// on packing and packing jacket; all other boundaries are zero-flux.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "packopt/autodiff.hpp"
#include "packopt/error.hpp"
#include "packopt/fem.hpp"
#include "packopt/linear_solver.hpp"
#include "packopt/mesh.hpp"
#include "packopt/quadrature.hpp"
#include "packopt/simplex.hpp"

namespace packopt {

struct TransportProps {
  double D = 3.72e-6;     // diffusion coefficient [m^2/s]
  double c_in = 100.0;    // inlet concentration [mol/m^3]
  double c_pack = 1.0;    // packing surface concentration [mol/m^3]

  void validate() const {
    if (!(D > 0.0)) throw ConfigError("diffusion coefficient must be positive");
    if (c_in == c_pack) throw ConfigError("c_in and c_pack must differ");
  }
};

struct TransportStabilization {
  bool supg = true;
  bool crosswind = true;
  double crosswind_c = 0.7;
};

struct TransportSolverConfig {
  TransportStabilization stab;
  LinearSolverConfig linear;
};

struct TransportReport {
  int lags = 0;
  double c_min = 0.0;
  double c_max = 0.0;
  double bound_lo = 0.0;  // min(c_in, c_pack)
  double bound_hi = 0.0;  // max(c_in, c_pack)
  double overshoot = 0.0;  // largest excursion outside the bounds / (hi - lo)
};

/// [(2 |u| / h)^2 + (4 D / h^2)^2]^(-1/2)
template <class T>
T tau_convection_diffusion(const T& u_norm2, const T& h, double diffusivity) {
  using std::sqrt;
  const T a = 2.0 / h;
  const T b = 4.0 * diffusivity / (h * h);
  return 1.0 / sqrt(a * a * u_norm2 + b * b);
}

/// Element residual, linear in `c`. `u` holds nodal velocities.
template <int Dim, class T>
std::array<T, Dim + 1> transport_element_residual(const SimplexCoords<Dim, T>& x,
                                                  const std::array<std::array<T, Dim>, Dim + 1>& u,
                                                  const std::array<T, Dim + 1>& c,
                                                  double diffusivity,
                                                  const TransportStabilization& stab) {
  const auto geo = simplex_geometry<Dim, T>(x);
  const T h = simplex_diameter<Dim, T>(x);

  std::array<T, Dim> u_mid;
  u_mid.fill(T(0.0));
  for (int i = 0; i <= Dim; ++i)
    for (int a = 0; a < Dim; ++a) u_mid[a] += u[i][a] / static_cast<double>(Dim + 1);
  T un2(0.0);
  for (int a = 0; a < Dim; ++a) un2 += u_mid[a] * u_mid[a];
  const T un = safe_norm(u_mid);

  std::array<T, Dim> gc;
  gc.fill(T(0.0));
  for (int i = 0; i <= Dim; ++i)
    for (int a = 0; a < Dim; ++a) gc[a] += c[i] * geo.grad[i][a];

  // Diffusive flux, including the crosswind part.
  std::array<T, Dim> flux;
  for (int a = 0; a < Dim; ++a) flux[a] = diffusivity * gc[a];
  if (stab.crosswind) {
    const T d_cw = stab.crosswind_c * h * un / 2.0 - diffusivity;
    if (value_of(d_cw) > 0.0) {
      T ug(0.0);
      for (int a = 0; a < Dim; ++a) ug += u_mid[a] * gc[a];
      for (int a = 0; a < Dim; ++a) flux[a] += d_cw * (gc[a] - u_mid[a] * ug / un2);
    }
  }

  std::array<T, Dim + 1> r;
  for (int i = 0; i <= Dim; ++i) {
    T s(0.0);
    for (int a = 0; a < Dim; ++a) s += flux[a] * geo.grad[i][a];
    r[i] = geo.volume * s;
  }

  const T tau = stab.supg ? tau_convection_diffusion(un2, h, diffusivity) : T(0.0);
  for (const auto& q : simplex_rule<Dim>()) {
    const T wq = q.weight * geo.volume;
    std::array<T, Dim> uq;
    uq.fill(T(0.0));
    for (int i = 0; i <= Dim; ++i)
      for (int a = 0; a < Dim; ++a) uq[a] += q.bary[i] * u[i][a];
    T ugc(0.0);
    for (int a = 0; a < Dim; ++a) ugc += uq[a] * gc[a];
    for (int i = 0; i <= Dim; ++i) {
      T val = ugc * q.bary[i];
      if (stab.supg) {
        T ud(0.0);
        for (int a = 0; a < Dim; ++a) ud += uq[a] * geo.grad[i][a];
        val += tau * ugc * ud;
      }
      r[i] += wq * val;
    }
  }
  return r;
}

namespace detail {

template <int Dim>
std::array<std::array<double, Dim>, Dim + 1> gather_velocity(const Mesh<Dim>& mesh,
                                                             const NoDeduce<VectorField<Dim>>& u, int cell) {
  std::array<std::array<double, Dim>, Dim + 1> out;
  for (int i = 0; i <= Dim; ++i) out[i] = u[mesh.cell(cell)[i]];
  return out;
}

template <int Dim>
std::array<double, Dim + 1> gather_scalar(const Mesh<Dim>& mesh, const Vector& c, int cell) {
  std::array<double, Dim + 1> out;
  for (int i = 0; i <= Dim; ++i) out[i] = c[mesh.cell(cell)[i]];
  return out;
}

}  // namespace detail

/// Per-cell SUPG parameter at the cell-midpoint velocity.
template <int Dim>
std::vector<double> compute_tau_transport(const Mesh<Dim>& mesh, const NoDeduce<VectorField<Dim>>& u,
                                          double diffusivity) {
  if (static_cast<int>(u.size()) != mesh.vertex_count())
    throw Error("compute_tau_transport: velocity field size mismatch");
  std::vector<double> tau(mesh.cell_count());
  for (int c = 0; c < mesh.cell_count(); ++c) {
    const double h = cell_diameter(mesh, c);
    if (!(h > 0.0)) throw MeshError("compute_tau_transport: degenerate cell " + std::to_string(c));
    std::array<double, Dim> um{};
    for (int v : mesh.cell(c))
      for (int a = 0; a < Dim; ++a) um[a] += u[v][a] / (Dim + 1);
    double n2 = 0.0;
    for (double x : um) n2 += x * x;
    tau[c] = tau_convection_diffusion(n2, h, diffusivity);
  }
  return tau;
}

/// Transport operator without boundary conditions (residual = A c).
template <int Dim>
SparseMatrix transport_operator(const Mesh<Dim>& mesh, const NoDeduce<VectorField<Dim>>& u, double diffusivity,
                                const TransportStabilization& stab) {
  if (static_cast<int>(u.size()) != mesh.vertex_count())
    throw Error("transport_operator: velocity field lives on a different mesh");
  constexpr int N = Dim + 1;
  using AD = Dual<N>;
  FunctionSpace<Dim> space(mesh, 1);
  return assemble_matrix(space, [&](int cell, std::span<double> out) {
    SimplexCoords<Dim, AD> x;
    std::array<std::array<AD, Dim>, Dim + 1> ue;
    const auto xd = mesh.cell_points(cell);
    const auto ud = detail::gather_velocity(mesh, u, cell);
    for (int i = 0; i <= Dim; ++i)
      for (int a = 0; a < Dim; ++a) {
        x[i][a] = AD(xd[i][a]);
        ue[i][a] = AD(ud[i][a]);
      }
    std::array<double, N> zero{};
    const auto c = seed<N>(zero, 0);
    const auto r = transport_element_residual<Dim, AD>(x, ue, c, diffusivity, stab);
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) out[i * N + j] = r[i].derivatives()[j];
  });
}

/// Dirichlet data: c_in on Inlet, c_pack on PackingJacket and Packing (those
/// present). Packing overrides the inlet on shared vertices.
template <int Dim>
std::vector<DirichletBC<Dim>> transport_bcs(const Mesh<Dim>& mesh, const TransportProps& props) {
  std::vector<DirichletBC<Dim>> bcs;
  if (mesh.has_tag(BoundaryTag::Inlet))
    bcs.push_back(DirichletBC<Dim>::constant({BoundaryTag::Inlet}, props.c_in));
  std::vector<BoundaryTag> sinks;
  for (auto t : {BoundaryTag::PackingJacket, BoundaryTag::Packing})
    if (mesh.has_tag(t)) sinks.push_back(t);
  if (!sinks.empty()) bcs.push_back(DirichletBC<Dim>::constant(sinks, props.c_pack));
  return bcs;
}

/// Assembled system with boundary conditions applied.
template <int Dim>
std::pair<SparseMatrix, Vector> transport_system(const Mesh<Dim>& mesh, const NoDeduce<VectorField<Dim>>& u,
                                                 const TransportProps& props,
                                                 const TransportStabilization& stab = {}) {
  SparseMatrix a = transport_operator(mesh, u, props.D, stab);
  Vector b = Vector::Zero(a.rows());
  FunctionSpace<Dim> space(mesh, 1);
  const auto bcs = transport_bcs(mesh, props);
  if (bcs.empty()) throw MeshError("transport problem has no Dirichlet boundary");
  apply_dirichlet(a, b, space, std::span<const DirichletBC<Dim>>(bcs));
  return {std::move(a), std::move(b)};
}

/// Solves for the concentration and reports the discrete maximum principle.
///
/// The crosswind diffusivity depends on the velocity only, so the system is
/// linear and a single solve is exact (report.lags == 1).
template <int Dim>
Vector solve_transport(const Mesh<Dim>& mesh, const NoDeduce<VectorField<Dim>>& u, const TransportProps& props,
                       const TransportSolverConfig& cfg = {}, TransportReport* report = nullptr) {
  props.validate();
  auto [a, b] = transport_system(mesh, u, props, cfg.stab);
  Vector c = solve_linear(a, b, cfg.linear);
  if (report) {
    TransportReport rep;
    rep.lags = 1;
    rep.c_min = c.minCoeff();
    rep.c_max = c.maxCoeff();
    rep.bound_lo = std::min(props.c_in, props.c_pack);
    rep.bound_hi = std::max(props.c_in, props.c_pack);
    const double excess = std::max({0.0, rep.c_max - rep.bound_hi, rep.bound_lo - rep.c_min});
    rep.overshoot = excess / (rep.bound_hi - rep.bound_lo);
    *report = rep;
  }
  return c;
}

}  // namespace packopt
