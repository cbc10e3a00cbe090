#pragma once

// Discrete adjoint shape gradient of beta with respect to vertex coordinates,
// its Riesz representative under a linear-elasticity inner product, and an
// Armijo gradient-ascent loop guarded by mesh quality.
//
// With R_f(w, X) = 0 the flow equations and R_c(c, w, X) = 0 the transport
// equations, the one-way coupling gives a block-triangular adjoint:
//
//   (dR_c/dc)^T z      = -dJ/dc
//   (dR_f/dw)^T lambda = -dJ/dw - (dR_c/dw)^T z
//   dJ/dX = dJ/dX|explicit + z^T dR_c/dX + lambda^T dR_f/dX
//
// All partial derivatives come from the same element kernels as the forward
// solves, differentiated exactly (stabilization parameters included).

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "packopt/autodiff.hpp"
#include "packopt/error.hpp"
#include "packopt/fem.hpp"
#include "packopt/flow.hpp"
#include "packopt/linear_solver.hpp"
#include "packopt/mesh.hpp"
#include "packopt/metrics.hpp"
#include "packopt/transport.hpp"

namespace packopt {

// ---------------------------------------------------------------------------
// Motion constraints

enum class MotionRole { Fixed, Sliding, Free };
enum class JacketNormalMode { Facets, CylinderZ };

struct ShapeConstraintConfig {
  // Indexed by tag code - 1.
  std::array<MotionRole, 5> tag_roles{MotionRole::Fixed, MotionRole::Fixed, MotionRole::Fixed,
                                      MotionRole::Sliding, MotionRole::Free};
  MotionRole interior = MotionRole::Free;
  JacketNormalMode jacket_normal = JacketNormalMode::Facets;
  std::array<double, 2> jacket_center{0.0, 0.0};  // axis position for CylinderZ
  double stiffening = 1.0;  // Riesz metric cell weight (mean volume / volume)^stiffening

  MotionRole role(BoundaryTag t) const { return tag_roles[tag_code(t) - 1]; }
  void set_role(BoundaryTag t, MotionRole r) { tag_roles[tag_code(t) - 1] = r; }
};

/// Per-vertex motion role. Sliding vertices keep `normal` fixed at the value
/// computed on the initial mesh.
template <int Dim>
struct ShapeConstraints {
  std::vector<MotionRole> role;
  VectorField<Dim> normal;
  std::vector<double> radius;  // initial distance to the axis (CylinderZ)
  JacketNormalMode mode = JacketNormalMode::Facets;
  std::array<double, 2> center{0.0, 0.0};
  double stiffening = 0.0;

  int count(MotionRole r) const { return static_cast<int>(std::count(role.begin(), role.end(), r)); }

  /// Zeroes fixed entries and removes the normal part of sliding entries.
  void project(VectorField<Dim>& g) const {
    for (std::size_t v = 0; v < g.size(); ++v) {
      if (role[v] == MotionRole::Fixed) {
        g[v].fill(0.0);
      } else if (role[v] == MotionRole::Sliding) {
        double d = 0.0;
        for (int a = 0; a < Dim; ++a) d += g[v][a] * normal[v][a];
        for (int a = 0; a < Dim; ++a) g[v][a] -= d * normal[v][a];
      }
    }
  }
};

namespace detail {

inline int role_rank(MotionRole r) {
  switch (r) {
    case MotionRole::Free: return 0;
    case MotionRole::Sliding: return 1;
    case MotionRole::Fixed: return 2;
  }
  return 2;
}

template <int Dim>
Point<Dim> radial_normal(const Point<Dim>& x, const std::array<double, 2>& c, double* r) {
  Point<Dim> n{};
  n[0] = x[0] - c[0];
  n[1] = x[1] - c[1];
  const double l = std::hypot(n[0], n[1]);
  if (r) *r = l;
  if (l > 0.0) {
    n[0] /= l;
    n[1] /= l;
  }
  return n;
}

}  // namespace detail

/// Resolves per-vertex roles. A vertex takes the most restrictive role of its
/// facets (fixed over sliding over free). Sliding vertices whose adjacent
/// sliding facets meet at a sharp angle become fixed.
template <int Dim>
ShapeConstraints<Dim> build_constraints(const Mesh<Dim>& mesh, const ShapeConstraintConfig& cfg) {
  const int nv = mesh.vertex_count();
  ShapeConstraints<Dim> sc;
  sc.mode = cfg.jacket_normal;
  sc.center = cfg.jacket_center;
  sc.stiffening = cfg.stiffening;
  sc.role.assign(nv, cfg.interior);
  sc.normal.assign(nv, Point<Dim>{});
  sc.radius.assign(nv, 0.0);

  std::vector<int> rank(nv, -1);
  for (const auto& f : mesh.boundary_facets())
    for (int v : f.vertices) rank[v] = std::max(rank[v], detail::role_rank(cfg.role(f.tag)));
  for (int v = 0; v < nv; ++v) {
    if (rank[v] == 2) sc.role[v] = MotionRole::Fixed;
    else if (rank[v] == 1) sc.role[v] = MotionRole::Sliding;
    else if (rank[v] == 0) sc.role[v] = MotionRole::Free;
  }

  if (sc.mode == JacketNormalMode::CylinderZ) {
    for (int v = 0; v < nv; ++v)
      if (sc.role[v] == MotionRole::Sliding) {
        sc.normal[v] = detail::radial_normal<Dim>(mesh.vertex(v), sc.center, &sc.radius[v]);
        if (!(sc.radius[v] > 0.0)) sc.role[v] = MotionRole::Fixed;
      }
    return sc;
  }

  VectorField<Dim> sum(nv, Point<Dim>{});
  std::vector<std::vector<Point<Dim>>> unit(nv);
  for (int k = 0; k < mesh.facet_count(); ++k) {
    const auto& f = mesh.facet(k);
    if (cfg.role(f.tag) != MotionRole::Sliding) continue;
    const auto na = facet_normal_area(mesh, k);
    for (int v : f.vertices) {
      if (sc.role[v] != MotionRole::Sliding) continue;
      for (int a = 0; a < Dim; ++a) sum[v][a] += na.normal[a] * na.measure;
      unit[v].push_back(na.normal);
    }
  }
  for (int v = 0; v < nv; ++v) {
    if (sc.role[v] != MotionRole::Sliding) continue;
    double l = 0.0;
    for (double c : sum[v]) l += c * c;
    l = std::sqrt(l);
    bool sharp = !(l > 0.0);
    for (int a = 0; a < Dim && !sharp; ++a) sc.normal[v][a] = sum[v][a] / l;
    for (const auto& n : unit[v]) {
      double d = 0.0;
      for (int a = 0; a < Dim; ++a) d += n[a] * sc.normal[v][a];
      if (d < 0.866) sharp = true;  // more than 30 degrees off the mean normal
    }
    if (sharp) {
      sc.role[v] = MotionRole::Fixed;
      sc.normal[v].fill(0.0);
    }
  }
  return sc;
}

// ---------------------------------------------------------------------------
// Vector helpers

template <std::size_t D>
Vector flatten(const std::vector<std::array<double, D>>& f) {
  Vector out(static_cast<Eigen::Index>(f.size() * D));
  for (std::size_t v = 0; v < f.size(); ++v)
    for (std::size_t a = 0; a < D; ++a) out[v * D + a] = f[v][a];
  return out;
}

template <int Dim>
VectorField<Dim> unflatten(const Vector& x) {
  VectorField<Dim> out(x.size() / Dim);
  for (std::size_t v = 0; v < out.size(); ++v)
    for (int a = 0; a < Dim; ++a) out[v][a] = x[v * Dim + a];
  return out;
}

template <std::size_t D>
double field_dot(const std::vector<std::array<double, D>>& a,
                 const std::vector<std::array<double, D>>& b) {
  double s = 0.0;
  for (std::size_t v = 0; v < a.size(); ++v)
    for (std::size_t k = 0; k < D; ++k) s += a[v][k] * b[v][k];
  return s;
}

template <std::size_t D>
double field_max_norm(const std::vector<std::array<double, D>>& a) {
  double m = 0.0;
  for (const auto& p : a) {
    double s = 0.0;
    for (double c : p) s += c * c;
    m = std::max(m, std::sqrt(s));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Objective sensitivities

/// Partial derivatives of the objective with the other arguments held fixed.
template <int Dim>
struct ObjectiveSensitivity {
  Vector dJ_dw;            // flow dofs, interleaved (u, p) per vertex
  Vector dJ_dc;            // concentration dofs
  VectorField<Dim> dJ_dX;  // explicit geometric dependence

  static ObjectiveSensitivity zeros(const Mesh<Dim>& mesh) {
    const int nv = mesh.vertex_count();
    return {Vector::Zero(static_cast<Eigen::Index>(nv) * (Dim + 1)), Vector::Zero(nv),
            VectorField<Dim>(nv, Point<Dim>{})};
  }
};

/// Partials of beta through Vdot (inlet flux), A_geo (packing facet
/// measures) and c_out (outlet flux-weighted average).
template <int Dim>
ObjectiveSensitivity<Dim> beta_sensitivity(const Mesh<Dim>& mesh, const CaseSolution<Dim>& sol,
                                           const TransportProps& tp) {
  constexpr int B = Dim + 1;
  constexpr int NX = Dim * Dim;
  using AD = Dual<NX>;
  auto s = ObjectiveSensitivity<Dim>::zeros(mesh);
  const auto& m = sol.metrics;
  const auto& w = sol.flow.values;
  const auto& c = sol.c;

  const double db_dv = m.beta / m.vdot;
  const double db_da = -m.beta / m.a_geo;
  const double db_dco = (m.vdot / m.a_geo) / (tp.c_pack - m.c_out);
  const double q_in = boundary_flux(mesh, sol.flow.velocity_field(), BoundaryTag::Inlet);
  const double sign_in = q_in < 0.0 ? -1.0 : 1.0;
  const auto [fc_tot, f_tot] = outlet_fluxes(mesh, sol.flow.velocity_field(), c);
  const double dco_dfc = 1.0 / f_tot;
  const double dco_df = -m.c_out / f_tot;

  for (int k = 0; k < mesh.facet_count(); ++k) {
    const auto& bf = mesh.facet(k);
    const bool inlet = bf.tag == BoundaryTag::Inlet;
    const bool outlet = bf.tag == BoundaryTag::Outlet;
    const bool pack = bf.tag == BoundaryTag::Packing || bf.tag == BoundaryTag::PackingJacket;
    if (!inlet && !outlet && !pack) continue;

    std::array<std::array<AD, Dim>, Dim> fx;
    const auto fp = mesh.facet_points(k);
    for (int i = 0; i < Dim; ++i)
      for (int a = 0; a < Dim; ++a) fx[i][a] = AD(fp[i][a], NX, i * Dim + a);
    const auto area = facet_area_vector<Dim, AD>(fx, mesh.facet_opposite_point(k));
    std::array<double, Dim> av;
    for (int a = 0; a < Dim; ++a) av[a] = area[a].value();

    AD contrib(0.0);
    if (inlet) {
      AD q(0.0);
      for (int j = 0; j < Dim; ++j)
        for (int a = 0; a < Dim; ++a) {
          const double uj = w[bf.vertices[j] * B + a];
          q += uj * area[a] / static_cast<double>(Dim);
          s.dJ_dw[bf.vertices[j] * B + a] += db_dv * sign_in * av[a] / Dim;
        }
      contrib = db_dv * sign_in * q;
    } else if (outlet) {
      AD fc(0.0), f(0.0);
      for (int j = 0; j < Dim; ++j) {
        AD un(0.0);
        double unv = 0.0;
        for (int a = 0; a < Dim; ++a) {
          un += w[bf.vertices[j] * B + a] * area[a];
          unv += w[bf.vertices[j] * B + a] * av[a];
        }
        f += un / static_cast<double>(Dim);
        double cw = 0.0;
        for (int i = 0; i < Dim; ++i) {
          const double mij = facet_mass_weight<Dim>(i, j);
          fc += mij * c[bf.vertices[i]] * un;
          s.dJ_dc[bf.vertices[i]] += db_dco * dco_dfc * mij * unv;
          cw += mij * c[bf.vertices[i]];
        }
        for (int a = 0; a < Dim; ++a)
          s.dJ_dw[bf.vertices[j] * B + a] +=
              db_dco * (dco_dfc * cw * av[a] + dco_df * av[a] / Dim);
      }
      contrib = db_dco * (dco_dfc * fc + dco_df * f);
    } else {
      contrib = db_da * safe_norm(area);
    }
    for (int i = 0; i < Dim; ++i)
      for (int a = 0; a < Dim; ++a) s.dJ_dX[bf.vertices[i]][a] += contrib.derivatives()[i * Dim + a];
  }
  return s;
}

// ---------------------------------------------------------------------------
// Adjoint solves

template <int Dim>
struct AdjointState {
  Vector z;       // adjoint concentration
  Vector lambda;  // adjoint velocity and pressure, same layout as FlowState
};

/// Flow Jacobian at `state` with Dirichlet rows and columns replaced by identity.
template <int Dim>
SparseMatrix constrained_flow_jacobian(const Mesh<Dim>& mesh, const FlowState<Dim>& state,
                                       const PhysicsConfig& cfg) {
  SparseMatrix k = flow_jacobian(mesh, state, cfg.fluid, FlowKernelOptions{cfg.flow.stab, true});
  FunctionSpace<Dim> space(mesh, Dim + 1);
  const auto bcs = flow_bcs(mesh, cfg.inlet);
  auto fixed = dirichlet_dofs(space, std::span<const DirichletBC<Dim>>(bcs));
  for (auto& d : fixed) d.second = 0.0;
  Vector dummy = Vector::Zero(k.rows());
  apply_dirichlet(k, dummy, fixed);
  return k;
}

namespace detail {

template <int Dim>
std::vector<int> flow_dirichlet_dofs(const Mesh<Dim>& mesh, const InletSpec& inlet) {
  FunctionSpace<Dim> space(mesh, Dim + 1);
  const auto bcs = flow_bcs(mesh, inlet);
  std::vector<int> out;
  for (const auto& d : dirichlet_dofs(space, std::span<const DirichletBC<Dim>>(bcs)))
    out.push_back(d.first);
  return out;
}

template <int Dim>
std::vector<int> transport_dirichlet_dofs(const Mesh<Dim>& mesh, const TransportProps& tp) {
  FunctionSpace<Dim> space(mesh, 1);
  const auto bcs = transport_bcs(mesh, tp);
  std::vector<int> out;
  for (const auto& d : dirichlet_dofs(space, std::span<const DirichletBC<Dim>>(bcs)))
    out.push_back(d.first);
  return out;
}

/// z^T dR_c/du and z^T dR_c/dX, per vertex: entries [0, Dim) are the velocity
/// part, [Dim, 2 Dim) the coordinate part.
template <int Dim>
Vector transport_coupling(const Mesh<Dim>& mesh, const NoDeduce<VectorField<Dim>>& u, const Vector& c,
                          const Vector& z, double diffusivity, const TransportStabilization& stab) {
  constexpr int NU = Dim * (Dim + 1);
  constexpr int N = 2 * NU;
  using AD = Dual<N>;
  FunctionSpace<Dim> space(mesh, 2 * Dim);
  return assemble_vector(space, [&](int cell, std::span<double> out) {
    const auto& ids = mesh.cell(cell);
    const auto xd = mesh.cell_points(cell);
    SimplexCoords<Dim, AD> x;
    std::array<std::array<AD, Dim>, Dim + 1> ue;
    std::array<AD, Dim + 1> ce;
    double zmax = 0.0;
    for (int i = 0; i <= Dim; ++i) zmax = std::max(zmax, std::abs(z[ids[i]]));
    if (zmax == 0.0) return;
    for (int i = 0; i <= Dim; ++i) {
      for (int a = 0; a < Dim; ++a) {
        ue[i][a] = AD(u[ids[i]][a], N, i * Dim + a);
        x[i][a] = AD(xd[i][a], N, NU + i * Dim + a);
      }
      ce[i] = AD(c[ids[i]]);
    }
    const auto r = transport_element_residual<Dim, AD>(x, ue, ce, diffusivity, stab);
    AD sum(0.0);
    for (int i = 0; i <= Dim; ++i) sum += z[ids[i]] * r[i];
    for (int i = 0; i <= Dim; ++i)
      for (int a = 0; a < Dim; ++a) {
        out[i * 2 * Dim + a] = sum.derivatives()[i * Dim + a];
        out[i * 2 * Dim + Dim + a] = sum.derivatives()[NU + i * Dim + a];
      }
  });
}

/// lambda^T dR_f/dX per vertex.
template <int Dim>
Vector flow_shape_term(const Mesh<Dim>& mesh, const FlowState<Dim>& state, const Vector& lambda,
                       const FluidProps& props, const FlowStabilization& stab) {
  constexpr int NX = Dim * (Dim + 1);
  constexpr int B = Dim + 1;
  using AD = Dual<NX>;
  FunctionSpace<Dim> space(mesh, Dim);
  const FlowKernelOptions opt{stab, true};
  return assemble_vector(space, [&](int cell, std::span<double> out) {
    const auto& ids = mesh.cell(cell);
    const auto xd = mesh.cell_points(cell);
    SimplexCoords<Dim, AD> x;
    for (int i = 0; i <= Dim; ++i)
      for (int a = 0; a < Dim; ++a) x[i][a] = AD(xd[i][a], NX, i * Dim + a);
    const auto w = promote<AD>(gather_flow(mesh, state.values, cell));
    const auto r = flow_element_residual<Dim, AD>(x, w, props, opt);
    AD sum(0.0);
    for (int i = 0; i <= Dim; ++i)
      for (int k = 0; k < B; ++k) sum += lambda[ids[i] * B + k] * r[i * B + k];
    for (int i = 0; i < NX; ++i) out[i] = sum.derivatives()[i];
  });
}

}  // namespace detail

/// Solves the block-triangular adjoint system for the objective whose partial
/// derivatives are `sens`.
template <int Dim>
AdjointState<Dim> solve_adjoint(const Mesh<Dim>& mesh, const CaseSolution<Dim>& sol,
                                const PhysicsConfig& cfg, const ObjectiveSensitivity<Dim>& sens) {
  constexpr int B = Dim + 1;
  AdjointState<Dim> adj;

  // Transport adjoint.
  auto [a, unused] = transport_system(mesh, sol.flow.velocity_field(), cfg.transport,
                                      cfg.transport_solver.stab);
  Vector rhs_c = -sens.dJ_dc;
  for (int d : detail::transport_dirichlet_dofs(mesh, cfg.transport)) rhs_c[d] = 0.0;
  const SparseMatrix at = a.transpose();
  adj.z = solve_linear(at, rhs_c, cfg.transport_solver.linear);

  // Flow adjoint.
  const Vector coupling = detail::transport_coupling(mesh, sol.flow.velocity_field(), sol.c, adj.z,
                                                     cfg.transport.D, cfg.transport_solver.stab);
  Vector rhs_f = -sens.dJ_dw;
  for (int v = 0; v < mesh.vertex_count(); ++v)
    for (int k = 0; k < Dim; ++k) rhs_f[v * B + k] -= coupling[v * 2 * Dim + k];
  for (int d : detail::flow_dirichlet_dofs(mesh, cfg.inlet)) rhs_f[d] = 0.0;
  const SparseMatrix kt = constrained_flow_jacobian(mesh, sol.flow, cfg).transpose();
  adj.lambda = solve_linear(kt, rhs_f, cfg.flow.newton.linear);
  return adj;
}

template <int Dim>
AdjointState<Dim> solve_adjoint(const Mesh<Dim>& mesh, const CaseSolution<Dim>& sol,
                                const PhysicsConfig& cfg) {
  return solve_adjoint(mesh, sol, cfg, beta_sensitivity(mesh, sol, cfg.transport));
}

/// Total derivative of the objective with respect to every vertex coordinate.
template <int Dim>
VectorField<Dim> shape_derivative(const Mesh<Dim>& mesh, const CaseSolution<Dim>& sol,
                                  const AdjointState<Dim>& adj, const PhysicsConfig& cfg,
                                  const ObjectiveSensitivity<Dim>& sens) {
  const Vector coupling = detail::transport_coupling(mesh, sol.flow.velocity_field(), sol.c, adj.z,
                                                     cfg.transport.D, cfg.transport_solver.stab);
  const Vector flow_term =
      detail::flow_shape_term(mesh, sol.flow, adj.lambda, cfg.fluid, cfg.flow.stab);
  VectorField<Dim> g = sens.dJ_dX;
  for (int v = 0; v < mesh.vertex_count(); ++v)
    for (int a = 0; a < Dim; ++a)
      g[v][a] += coupling[v * 2 * Dim + Dim + a] + flow_term[v * Dim + a];
  return g;
}

template <int Dim>
VectorField<Dim> shape_derivative(const Mesh<Dim>& mesh, const CaseSolution<Dim>& sol,
                                  const PhysicsConfig& cfg) {
  const auto sens = beta_sensitivity(mesh, sol, cfg.transport);
  return shape_derivative(mesh, sol, solve_adjoint(mesh, sol, cfg, sens), cfg, sens);
}

// ---------------------------------------------------------------------------
// Riesz representative

template <int Dim>
struct ShapeGradient {
  VectorField<Dim> g_raw;
  VectorField<Dim> g;
  double slope = 0.0;  // g_raw . g

  double norm() const { return std::sqrt(std::max(0.0, slope)); }
};

/// Stiffness matrix of a(g, v) = int grad g : grad v + div g div v.
template <int Dim>
SparseMatrix elasticity_matrix(const Mesh<Dim>& mesh, double stiffening = 0.0) {
  FunctionSpace<Dim> space(mesh, Dim);
  const double mean_volume = total_volume(mesh) / mesh.cell_count();
  return assemble_matrix(space, [&](int cell, std::span<double> out) {
    const auto geo = simplex_geometry<Dim, double>(mesh.cell_points(cell));
    const double w = geo.volume * std::pow(mean_volume / geo.volume, stiffening);
    constexpr int n = (Dim + 1) * Dim;
    for (int i = 0; i <= Dim; ++i)
      for (int j = 0; j <= Dim; ++j) {
        double gg = 0.0;
        for (int k = 0; k < Dim; ++k) gg += geo.grad[i][k] * geo.grad[j][k];
        for (int a = 0; a < Dim; ++a)
          for (int b = 0; b < Dim; ++b)
            out[(i * Dim + a) * n + j * Dim + b] =
                w * ((a == b ? gg : 0.0) + geo.grad[i][a] * geo.grad[j][b]);
      }
  });
}

/// Solves a(g, v) = g_raw . v over admissible g and v. Fixed vertices get
/// g = 0 and sliding vertices g . n = 0, realized by the symmetric projection
/// T A T + (I - T) with T the nodal admissible-direction projector.
template <int Dim>
ShapeGradient<Dim> riesz_gradient(const Mesh<Dim>& mesh, const NoDeduce<VectorField<Dim>>& g_raw,
                                  const ShapeConstraints<Dim>& sc) {
  const int nv = mesh.vertex_count();
  if (static_cast<int>(g_raw.size()) != nv) throw Error("riesz_gradient: size mismatch");
  for (const auto& p : g_raw)
    for (double c : p)
      if (!std::isfinite(c)) throw Error("riesz_gradient: non-finite raw gradient");
  ShapeGradient<Dim> out;
  out.g_raw = g_raw;
  out.g.assign(nv, Point<Dim>{});
  VectorField<Dim> rhs = g_raw;
  sc.project(rhs);
  if (field_max_norm(rhs) == 0.0) return out;

  std::vector<Eigen::Triplet<double>> tt, dt;
  for (int v = 0; v < nv; ++v) {
    for (int a = 0; a < Dim; ++a)
      for (int b = 0; b < Dim; ++b) {
        const double id = a == b ? 1.0 : 0.0;
        double t = 0.0;
        if (sc.role[v] == MotionRole::Free) t = id;
        else if (sc.role[v] == MotionRole::Sliding) t = id - sc.normal[v][a] * sc.normal[v][b];
        if (t != 0.0) tt.emplace_back(v * Dim + a, v * Dim + b, t);
        if (id - t != 0.0) dt.emplace_back(v * Dim + a, v * Dim + b, id - t);
      }
  }
  SparseMatrix t(nv * Dim, nv * Dim), d(nv * Dim, nv * Dim);
  t.setFromTriplets(tt.begin(), tt.end());
  d.setFromTriplets(dt.begin(), dt.end());
  SparseMatrix m = t * elasticity_matrix(mesh, sc.stiffening) * t + d;
  m.prune(0.0);

  Eigen::SimplicialLDLT<SparseMatrix> ldlt(m);
  if (ldlt.info() != Eigen::Success) throw MeshError("singular shape-gradient extension system");
  const Vector b = flatten(rhs);
  Vector x = ldlt.solve(b);
  if (ldlt.info() != Eigen::Success || !x.allFinite() || !(ldlt.vectorD().minCoeff() > 0.0))
    throw MeshError("singular shape-gradient extension system (disconnected free region?)");
  out.g = unflatten<Dim>(x);
  sc.project(out.g);
  out.slope = field_dot(g_raw, out.g);
  return out;
}

template <int Dim>
ShapeGradient<Dim> compute_shape_gradient(const Mesh<Dim>& mesh, const CaseSolution<Dim>& sol,
                                          const PhysicsConfig& cfg,
                                          const ShapeConstraints<Dim>& sc) {
  return riesz_gradient(mesh, shape_derivative(mesh, sol, cfg), sc);
}

// ---------------------------------------------------------------------------
// Finite-difference checks

/// Central difference of J along `dir`: (J(X + e dir) - J(X - e dir)) / (2 e).
template <int Dim>
double directional_fd(const Mesh<Dim>& mesh, const PhysicsConfig& cfg,
                      const FlowState<Dim>& warm, const NoDeduce<VectorField<Dim>>& dir, double e) {
  auto eval = [&](double sign) {
    Mesh<Dim> m = mesh;
    auto x = mesh.vertices();
    for (std::size_t v = 0; v < x.size(); ++v)
      for (int a = 0; a < Dim; ++a) x[v][a] += sign * e * dir[v][a];
    m.set_vertices(std::move(x));
    return solve_case(m, cfg, &warm).metrics.J;
  };
  return (eval(1.0) - eval(-1.0)) / (2.0 * e);
}

inline double relative_gap(double a, double b) {
  const double s = std::max(std::abs(a), std::abs(b));
  return s > 0.0 ? std::abs(a - b) / s : 0.0;
}

struct GradcheckConfig {
  int directions = 10;
  double eps = 1e-5;             // largest step, in units of the mean edge length
  unsigned long long seed = 1;
  double newton_rel_tol = 1e-11;  // forward solves inside the check
  double tolerance = 1e-2;
};

struct GradcheckRow {
  int direction = 0;
  double eps = 0.0;
  double fd = 0.0;
  double adjoint = 0.0;
  double rel_error = 0.0;
};

struct GradcheckResult {
  std::vector<GradcheckRow> rows;
  std::vector<double> best_error;  // per direction, minimum over the eps sweep
  double worst_error = 0.0;
  double worst_best_error = 0.0;
  double J = 0.0;
  double h_mean = 0.0;

  bool passed(double tol) const { return worst_error < tol; }
};

/// Physics with tight Newton tolerances for finite differencing.
inline PhysicsConfig tightened(PhysicsConfig cfg, double rel_tol) {
  cfg.flow.newton.rel_tol = std::min(cfg.flow.newton.rel_tol, rel_tol);
  cfg.flow.newton.max_iter = std::max(cfg.flow.newton.max_iter, 40);
  cfg.flow.newton.linear.rel_tol = std::min(cfg.flow.newton.linear.rel_tol, 1e-10);
  cfg.transport_solver.linear.rel_tol = std::min(cfg.transport_solver.linear.rel_tol, 1e-12);
  return cfg;
}

/// Random admissible directions: a smoothed (Riesz-extended) random field,
/// scaled to max-norm h_mean. FD steps are eps, eps/10, eps/100.
template <int Dim>
GradcheckResult gradient_check(const Mesh<Dim>& mesh, const PhysicsConfig& physics,
                               const ShapeConstraints<Dim>& sc, const GradcheckConfig& gc) {
  if (gc.directions < 1 || !(gc.eps > 0.0)) throw ConfigError("gradcheck: invalid settings");
  const PhysicsConfig cfg = tightened(physics, gc.newton_rel_tol);
  const auto sol = solve_case(mesh, cfg);
  const auto g_raw = shape_derivative(mesh, sol, cfg);

  GradcheckResult res;
  res.J = sol.metrics.J;
  res.h_mean = mean_edge_length(mesh);
  std::mt19937_64 rng(gc.seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int k = 0; k < gc.directions; ++k) {
    VectorField<Dim> r(mesh.vertex_count());
    for (auto& p : r)
      for (auto& c : p) c = uni(rng);
    VectorField<Dim> dir = riesz_gradient(mesh, r, sc).g;
    const double mx = field_max_norm(dir);
    if (!(mx > 0.0)) throw MeshError("gradcheck: no admissible direction (all vertices fixed)");
    for (auto& p : dir)
      for (auto& c : p) c *= res.h_mean / mx;
    const double adj = field_dot(g_raw, dir);
    double best = std::numeric_limits<double>::infinity();
    for (double e : {gc.eps, gc.eps / 10.0, gc.eps / 100.0}) {
      GradcheckRow row{k, e, directional_fd(mesh, cfg, sol.flow, dir, e), adj, 0.0};
      row.rel_error = relative_gap(row.fd, row.adjoint);
      best = std::min(best, row.rel_error);
      res.worst_error = std::max(res.worst_error, row.rel_error);
      res.rows.push_back(row);
    }
    res.best_error.push_back(best);
    res.worst_best_error = std::max(res.worst_best_error, best);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Optimization loop

struct OptimizerConfig {
  int max_iterations = 50;
  double initial_step = 0.5;  // first trial max displacement, in mean edge lengths
  double armijo = 1e-4;
  double shrink = 0.5;
  double grow = 1.5;
  int max_halvings = 20;
  double quality_floor = 0.1;
  double grad_tol = 1e-6;      // stop when |g| <= grad_tol * |g_0|
  int audit_every = 0;         // FD audit period in iterations; 0 disables
  double audit_eps = 1e-5;     // in mean edge lengths
  double trust_radius = 0.05;  // monitored max displacement, fraction of the bounding diameter
  double quality_guard = 0.0;  // cells below guard * floor have their vertices frozen; <= 1 disables
  double min_step = 1e-10;     // stop when the accepted step falls below this, in mean edge lengths

  void validate() const {
    if (max_iterations < 0) throw ConfigError("optimizer.max_iterations must be >= 0");
    if (!(initial_step > 0.0)) throw ConfigError("optimizer.initial_step must be positive");
    if (!(armijo > 0.0 && armijo < 1.0)) throw ConfigError("optimizer.armijo must lie in (0,1)");
    if (!(shrink > 0.0 && shrink < 1.0)) throw ConfigError("optimizer.shrink must lie in (0,1)");
    if (!(grow >= 1.0)) throw ConfigError("optimizer.grow must be >= 1");
    if (max_halvings < 0) throw ConfigError("optimizer.max_halvings must be >= 0");
    if (!(quality_floor >= 0.0 && quality_floor < 1.0))
      throw ConfigError("optimizer.quality_floor must lie in [0,1)");
    if (!(grad_tol >= 0.0)) throw ConfigError("optimizer.grad_tol must be >= 0");
    if (audit_every < 0 || !(audit_eps > 0.0)) throw ConfigError("invalid optimizer audit settings");
    if (!(trust_radius > 0.0)) throw ConfigError("optimizer.trust_radius must be positive");
    if (!(quality_guard >= 0.0)) throw ConfigError("optimizer.quality_guard must be >= 0");
    if (!(min_step >= 0.0)) throw ConfigError("optimizer.min_step must be >= 0");
  }
};

struct OptimizationRecord {
  int iter = 0;
  double J = 0.0;
  double beta = 0.0;
  double c_out = 0.0;
  double dp = 0.0;
  double a_geo = 0.0;
  double min_quality = 0.0;
  double step = 0.0;       // max vertex displacement of the step leading here [m]
  double grad_norm = 0.0;  // sqrt(g_raw . g) at this iterate
  int frozen = 0;          // vertices frozen by the quality guard for the next step
};

template <int Dim>
struct LineSearchResult {
  bool accepted = false;
  double t = 0.0;             // accepted multiplier of g
  double relative_step = 0.0;  // accepted max displacement / h_mean
  double displacement = 0.0;  // accepted max displacement [m]
  int halvings = 0;
  int quality_rejections = 0;
  int solver_rejections = 0;
  int armijo_rejections = 0;
  CaseSolution<Dim> solution;
};

namespace detail {

/// t g, with sliding vertices on a cylindrical jacket pulled back to their
/// initial radius.
template <int Dim>
VertexDisplacement<Dim> step_displacement(const Mesh<Dim>& mesh, const NoDeduce<VectorField<Dim>>& g, double t,
                                          const ShapeConstraints<Dim>& sc) {
  VertexDisplacement<Dim> d(g.size());
  for (std::size_t v = 0; v < g.size(); ++v)
    for (int a = 0; a < Dim; ++a) d[v][a] = t * g[v][a];
  if (sc.mode != JacketNormalMode::CylinderZ) return d;
  for (std::size_t v = 0; v < g.size(); ++v) {
    if (sc.role[v] != MotionRole::Sliding) continue;
    const auto& x = mesh.vertex(static_cast<int>(v));
    const double px = x[0] + d[v][0] - sc.center[0];
    const double py = x[1] + d[v][1] - sc.center[1];
    const double r = std::hypot(px, py);
    if (!(r > 0.0)) continue;
    d[v][0] = sc.center[0] + px * sc.radius[v] / r - x[0];
    d[v][1] = sc.center[1] + py * sc.radius[v] / r - x[1];
  }
  return d;
}

}  // namespace detail

/// Backtracking Armijo step along g starting from max displacement
/// `relative_step * h_mean`. On success `mesh` holds the new coordinates; on
/// failure it is unchanged.
template <int Dim>
LineSearchResult<Dim> line_search_step(Mesh<Dim>& mesh, const ShapeGradient<Dim>& grad,
                                       const CaseSolution<Dim>& current, double relative_step,
                                       const PhysicsConfig& physics, const OptimizerConfig& cfg,
                                       const ShapeConstraints<Dim>& sc) {
  LineSearchResult<Dim> res;
  const double gmax = field_max_norm(grad.g);
  if (!(gmax > 0.0) || !(grad.slope > 0.0)) return res;
  const double h = mean_edge_length(mesh);
  const auto saved = mesh.vertices();
  double rel = relative_step;
  for (int attempt = 0; attempt <= cfg.max_halvings; ++attempt) {
    if (attempt > 0) {
      rel *= cfg.shrink;
      ++res.halvings;
    }
    const double t = rel * h / gmax;
    const auto d = detail::step_displacement(mesh, grad.g, t, sc);
    const auto outcome = apply_displacement(mesh, d, cfg.quality_floor);
    if (!outcome.accepted) {
      ++res.quality_rejections;
      continue;
    }
    try {
      auto sol = solve_case(mesh, physics, &current.flow);
      if (sol.metrics.J >= current.metrics.J + cfg.armijo * t * grad.slope &&
          sol.metrics.J > current.metrics.J) {
        res.accepted = true;
        res.t = t;
        res.relative_step = rel;
        res.displacement = field_max_norm(d);
        res.solution = std::move(sol);
        return res;
      }
      ++res.armijo_rejections;
    } catch (const SolverError&) {
      ++res.solver_rejections;
    } catch (const MetricError&) {
      ++res.solver_rejections;
    }
    mesh.set_vertices(saved);
  }
  return res;
}

enum class StopReason { MaxIterations, Converged, Stalled, Failed };

inline const char* stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::MaxIterations: return "max_iterations";
    case StopReason::Converged: return "converged";
    case StopReason::Stalled: return "stalled";
    case StopReason::Failed: return "failed";
  }
  return "unknown";
}

struct AuditRecord {
  int iter = 0;
  double fd = 0.0;
  double adjoint = 0.0;
  double rel_error = 0.0;
};

template <int Dim>
struct OptimizationResult {
  std::vector<OptimizationRecord> history;
  StopReason reason = StopReason::MaxIterations;
  std::string message;
  std::vector<AuditRecord> audits;
  int ascent_violations = 0;     // iterations with g_raw . g < 0
  double max_displacement = 0.0;  // max-norm distance from the initial mesh [m]
  double trust_radius = 0.0;      // [m]
  bool trust_exceeded = false;
  CaseSolution<Dim> solution;     // state on the final mesh
};

/// Copy of `sc` with every vertex of a cell of quality below `threshold` fixed.
template <int Dim>
ShapeConstraints<Dim> guarded_constraints(const Mesh<Dim>& mesh, const ShapeConstraints<Dim>& sc,
                                          double threshold, int* frozen = nullptr) {
  ShapeConstraints<Dim> out = sc;
  int n = 0;
  for (int c = 0; c < mesh.cell_count(); ++c) {
    if (cell_quality(mesh, c) >= threshold) continue;
    for (int v : mesh.cell(c))
      if (out.role[v] != MotionRole::Fixed) {
        out.role[v] = MotionRole::Fixed;
        ++n;
      }
  }
  if (frozen) *frozen = n;
  return out;
}

/// Called after every recorded iterate (including iteration 0).
template <int Dim>
using IterationCallback =
    std::function<void(const Mesh<Dim>&, const CaseSolution<Dim>&, const OptimizationRecord&)>;

/// Gradient ascent on beta. `mesh` is updated in place and always holds the
/// last accepted (valid) coordinates, also when the run stops on a failure.
template <int Dim>
OptimizationResult<Dim> optimize(Mesh<Dim>& mesh, const PhysicsConfig& physics,
                                 const OptimizerConfig& cfg, const ShapeConstraintConfig& scfg,
                                 IterationCallback<Dim> callback = {}) {
  cfg.validate();
  const auto sc = build_constraints(mesh, scfg);
  const auto initial = mesh.vertices();
  OptimizationResult<Dim> res;
  res.trust_radius = cfg.trust_radius * bounding_diameter(mesh);

  CaseSolution<Dim> sol = solve_case(mesh, physics);
  const double guard = cfg.quality_guard > 1.0 ? cfg.quality_guard * cfg.quality_floor : 0.0;
  int frozen = 0;
  ShapeConstraints<Dim> active = guarded_constraints(mesh, sc, guard, &frozen);
  ShapeGradient<Dim> grad = compute_shape_gradient(mesh, sol, physics, active);

  auto record = [&](int iter, double step) {
    OptimizationRecord r;
    r.iter = iter;
    r.J = sol.metrics.J;
    r.beta = sol.metrics.beta;
    r.c_out = sol.metrics.c_out;
    r.dp = sol.metrics.dp;
    r.a_geo = sol.metrics.a_geo;
    r.min_quality = min_quality(mesh);
    r.step = step;
    r.grad_norm = grad.norm();
    r.frozen = frozen;
    if (grad.slope < 0.0) ++res.ascent_violations;
    res.history.push_back(r);
    if (callback) callback(mesh, sol, r);
  };
  record(0, 0.0);

  const double g0 = grad.norm();
  double rel_step = cfg.initial_step;
  res.reason = StopReason::MaxIterations;
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    if (grad.norm() <= cfg.grad_tol * g0 || g0 == 0.0) {
      res.reason = g0 == 0.0 ? StopReason::Stalled : StopReason::Converged;
      res.message = g0 == 0.0 ? "no admissible ascent direction" : "gradient norm below tolerance";
      break;
    }
    auto ls = line_search_step(mesh, grad, sol, rel_step, physics, cfg, active);
    if (!ls.accepted) {
      res.reason = StopReason::Stalled;
      res.message = "line search found no acceptable step";
      break;
    }
    sol = std::move(ls.solution);
    rel_step = ls.relative_step * cfg.grow;
    try {
      active = guarded_constraints(mesh, sc, guard, &frozen);
      grad = compute_shape_gradient(mesh, sol, physics, active);
    } catch (const Error& e) {
      res.reason = StopReason::Failed;
      res.message = e.what();
      grad = ShapeGradient<Dim>{};
      record(it, ls.displacement);
      break;
    }
    record(it, ls.displacement);
    if (ls.relative_step < cfg.min_step) {
      res.reason = StopReason::Stalled;
      res.message = "step length below optimizer.min_step";
      break;
    }

    if (cfg.audit_every > 0 && it % cfg.audit_every == 0 && field_max_norm(grad.g) > 0.0) {
      const PhysicsConfig tight = tightened(physics, 1e-11);
      const auto base = solve_case(mesh, tight, &sol.flow);
      const auto g_raw = shape_derivative(mesh, base, tight);
      VectorField<Dim> dir = grad.g;
      const double s = mean_edge_length(mesh) / field_max_norm(dir);
      for (auto& p : dir)
        for (auto& c : p) c *= s;
      AuditRecord a;
      a.iter = it;
      a.adjoint = field_dot(g_raw, dir);
      a.fd = directional_fd(mesh, tight, base.flow, dir, cfg.audit_eps);
      a.rel_error = relative_gap(a.fd, a.adjoint);
      res.audits.push_back(a);
    }
  }

  for (std::size_t v = 0; v < initial.size(); ++v) {
    double s = 0.0;
    for (int a = 0; a < Dim; ++a) s += (mesh.vertex(static_cast<int>(v))[a] - initial[v][a]) *
                                       (mesh.vertex(static_cast<int>(v))[a] - initial[v][a]);
    res.max_displacement = std::max(res.max_displacement, std::sqrt(s));
  }
  res.trust_exceeded = res.max_displacement > res.trust_radius;
  res.solution = std::move(sol);
  return res;
}

}  // namespace packopt
