#pragma once

// Steady incompressible Navier-Stokes with equal-order P1/P1 elements and
// PSPG + SUPG + grad-div stabilization.
//
//   mu (grad u, grad v) + rho ((u.grad)u, v) - (p, div v) + (div u, q)
//   + sum_K tau_mom (rho (u.grad)u + grad p, rho (u.grad)v + grad q)_K
//   + sum_K tau_lsic (div u, div v)_K
//
// The outlet carries no boundary term (do-nothing condition), which also
// fixes the pressure level.

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "packopt/autodiff.hpp"
#include "packopt/error.hpp"
#include "packopt/fem.hpp"
#include "packopt/mesh.hpp"
#include "packopt/newton.hpp"
#include "packopt/quadrature.hpp"
#include "packopt/simplex.hpp"

namespace packopt {

struct FluidProps {
  double mu = 1.728e-5;  // dynamic viscosity [Pa s]
  double rho = 1.138;    // density [kg/m^3]

  void validate() const {
    if (!(mu > 0.0) || !(rho > 0.0)) throw ConfigError("fluid properties must be positive");
  }
};

struct FlowStabilization {
  bool supg = true;
  bool pspg = true;
  bool lsic = true;
};

/// Per-cell stabilization parameters.
struct StabilizationParams {
  std::vector<double> tau_mom;
  std::vector<double> tau_lsic;
};

enum class InletProfile { Uniform, Parabolic };

struct InletSpec {
  double u_in = 0.933;  // mean inflow speed [m/s]
  InletProfile profile = InletProfile::Uniform;
};

/// Velocity and pressure, interleaved per vertex: (u_0..u_{Dim-1}, p).
template <int Dim>
struct FlowState {
  static constexpr int kBlock = Dim + 1;
  Vector values;

  static FlowState zeros(int vertex_count) {
    return FlowState{Vector::Zero(static_cast<Eigen::Index>(vertex_count) * kBlock)};
  }
  int vertex_count() const { return static_cast<int>(values.size() / kBlock); }
  Point<Dim> velocity(int v) const {
    Point<Dim> u;
    for (int a = 0; a < Dim; ++a) u[a] = values[v * kBlock + a];
    return u;
  }
  double pressure(int v) const { return values[v * kBlock + Dim]; }

  VectorField<Dim> velocity_field() const {
    VectorField<Dim> out(vertex_count());
    for (int v = 0; v < vertex_count(); ++v) out[v] = velocity(v);
    return out;
  }
  Vector pressure_field() const {
    Vector p(vertex_count());
    for (int v = 0; v < vertex_count(); ++v) p[v] = pressure(v);
    return p;
  }
};

struct FlowKernelOptions {
  FlowStabilization stab;
  bool convective = true;  // false: Stokes (no convection, diffusive-limit tau)
};

/// [(2 rho |u| / h)^2 + (4 mu / h^2)^2]^(-1/2), written with |u|^2 so it is
/// smooth at u = 0.
template <class T>
T tau_momentum(const T& u_norm2, const T& h, double rho, double mu) {
  using std::sqrt;
  const T a = 2.0 * rho / h;
  const T b = 4.0 * mu / (h * h);
  return 1.0 / sqrt(a * a * u_norm2 + b * b);
}

/// Element residual. `w` is node-major (u_0..u_{Dim-1}, p) per node; the
/// result uses the same layout (momentum components, then continuity).
template <int Dim, class T>
std::array<T, (Dim + 1) * (Dim + 1)> flow_element_residual(
    const SimplexCoords<Dim, T>& x, const std::array<T, (Dim + 1) * (Dim + 1)>& w,
    const FluidProps& props, const FlowKernelOptions& opt) {
  constexpr int B = Dim + 1;
  const double rho = props.rho;
  const double mu = props.mu;
  const auto geo = simplex_geometry<Dim, T>(x);
  const T h = simplex_diameter<Dim, T>(x);

  std::array<T, Dim> u_mid;
  u_mid.fill(T(0.0));
  for (int i = 0; i <= Dim; ++i)
    for (int a = 0; a < Dim; ++a) u_mid[a] += w[i * B + a] / static_cast<double>(Dim + 1);
  T un2(0.0);
  if (opt.convective)
    for (int a = 0; a < Dim; ++a) un2 += u_mid[a] * u_mid[a];
  const T tau_m = tau_momentum(un2, h, rho, mu);
  const T tau_l = opt.convective ? T(0.5 * rho * safe_norm(u_mid) * h) : T(0.0);

  std::array<std::array<T, Dim>, Dim> grad_u;  // grad_u[a][b] = d u_a / d x_b
  std::array<T, Dim> grad_p;
  for (int a = 0; a < Dim; ++a) {
    grad_p[a] = T(0.0);
    for (int b = 0; b < Dim; ++b) grad_u[a][b] = T(0.0);
  }
  for (int i = 0; i <= Dim; ++i)
    for (int b = 0; b < Dim; ++b) {
      for (int a = 0; a < Dim; ++a) grad_u[a][b] += w[i * B + a] * geo.grad[i][b];
      grad_p[b] += w[i * B + Dim] * geo.grad[i][b];
    }
  T div(0.0);
  for (int a = 0; a < Dim; ++a) div += grad_u[a][a];

  std::array<T, B * B> r;
  r.fill(T(0.0));

  // Cellwise-constant integrands: viscous and grad-div terms.
  for (int i = 0; i <= Dim; ++i)
    for (int a = 0; a < Dim; ++a) {
      T s(0.0);
      for (int b = 0; b < Dim; ++b) s += grad_u[a][b] * geo.grad[i][b];
      T val = mu * s;
      if (opt.stab.lsic && opt.convective) val += tau_l * div * geo.grad[i][a];
      r[i * B + a] += geo.volume * val;
    }

  for (const auto& q : simplex_rule<Dim>()) {
    const T wq = q.weight * geo.volume;
    std::array<T, Dim> uq;
    uq.fill(T(0.0));
    T pq(0.0);
    for (int i = 0; i <= Dim; ++i) {
      for (int a = 0; a < Dim; ++a) uq[a] += q.bary[i] * w[i * B + a];
      pq += q.bary[i] * w[i * B + Dim];
    }
    std::array<T, Dim> conv;
    std::array<T, Dim> strong;  // strong momentum residual without the Laplacian
    for (int a = 0; a < Dim; ++a) {
      conv[a] = T(0.0);
      if (opt.convective)
        for (int b = 0; b < Dim; ++b) conv[a] += uq[b] * grad_u[a][b];
      strong[a] = rho * conv[a] + grad_p[a];
    }
    for (int i = 0; i <= Dim; ++i) {
      const double phi = q.bary[i];
      T u_dphi(0.0);
      for (int b = 0; b < Dim; ++b) u_dphi += uq[b] * geo.grad[i][b];
      for (int a = 0; a < Dim; ++a) {
        T val = rho * conv[a] * phi - pq * geo.grad[i][a];
        if (opt.stab.supg && opt.convective) val += tau_m * strong[a] * rho * u_dphi;
        r[i * B + a] += wq * val;
      }
      T cont = div * phi;
      if (opt.stab.pspg) {
        T s(0.0);
        for (int a = 0; a < Dim; ++a) s += strong[a] * geo.grad[i][a];
        cont += tau_m * s;
      }
      r[i * B + Dim] += wq * cont;
    }
  }
  return r;
}

namespace detail {

template <int Dim>
std::array<double, (Dim + 1) * (Dim + 1)> gather_flow(const Mesh<Dim>& mesh, const Vector& w,
                                                      int cell) {
  constexpr int B = Dim + 1;
  std::array<double, B * B> out;
  const auto& c = mesh.cell(cell);
  for (int i = 0; i <= Dim; ++i)
    for (int a = 0; a < B; ++a) out[i * B + a] = w[c[i] * B + a];
  return out;
}

template <int Dim, class T>
SimplexCoords<Dim, T> promote_coords(const SimplexCoords<Dim, double>& x) {
  SimplexCoords<Dim, T> out;
  for (int i = 0; i <= Dim; ++i)
    for (int a = 0; a < Dim; ++a) out[i][a] = T(x[i][a]);
  return out;
}

}  // namespace detail

/// Per-cell stabilization parameters evaluated at the cell-midpoint velocity.
template <int Dim>
StabilizationParams compute_tau_flow(const Mesh<Dim>& mesh, const NoDeduce<VectorField<Dim>>& u,
                                     const FluidProps& props) {
  if (static_cast<int>(u.size()) != mesh.vertex_count())
    throw Error("compute_tau_flow: velocity field size mismatch");
  StabilizationParams out;
  out.tau_mom.resize(mesh.cell_count());
  out.tau_lsic.resize(mesh.cell_count());
  for (int c = 0; c < mesh.cell_count(); ++c) {
    const double h = cell_diameter(mesh, c);
    if (!(h > 0.0)) throw MeshError("compute_tau_flow: degenerate cell " + std::to_string(c));
    std::array<double, Dim> um{};
    for (int v : mesh.cell(c))
      for (int a = 0; a < Dim; ++a) {
        if (!std::isfinite(u[v][a])) throw Error("compute_tau_flow: non-finite velocity");
        um[a] += u[v][a] / (Dim + 1);
      }
    double n2 = 0.0;
    for (double x : um) n2 += x * x;
    out.tau_mom[c] = tau_momentum(n2, h, props.rho, props.mu);
    out.tau_lsic[c] = 0.5 * props.rho * std::sqrt(n2) * h;
  }
  return out;
}

/// Assembled residual without boundary-condition rows.
template <int Dim>
Vector flow_residual(const Mesh<Dim>& mesh, const FlowState<Dim>& state, const FluidProps& props,
                     const FlowKernelOptions& opt = {}) {
  if (!state.values.allFinite()) throw Error("flow_residual: non-finite state");
  FunctionSpace<Dim> space(mesh, Dim + 1);
  return assemble_vector(space, [&](int c, std::span<double> out) {
    const auto r = flow_element_residual<Dim, double>(mesh.cell_points(c),
                                                      detail::gather_flow(mesh, state.values, c),
                                                      props, opt);
    for (std::size_t i = 0; i < r.size(); ++i) out[i] = r[i];
  });
}

/// Exact derivative of flow_residual with respect to the state.
template <int Dim>
SparseMatrix flow_jacobian(const Mesh<Dim>& mesh, const FlowState<Dim>& state,
                           const FluidProps& props, const FlowKernelOptions& opt = {}) {
  constexpr int N = (Dim + 1) * (Dim + 1);
  using AD = Dual<N>;
  FunctionSpace<Dim> space(mesh, Dim + 1);
  return assemble_matrix(space, [&](int c, std::span<double> out) {
    const auto x = detail::promote_coords<Dim, AD>(mesh.cell_points(c));
    const auto w = seed<N>(detail::gather_flow(mesh, state.values, c), 0);
    const auto r = flow_element_residual<Dim, AD>(x, w, props, opt);
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) out[i * N + j] = r[i].derivatives()[j];
  });
}

// ---------------------------------------------------------------------------
// Boundary data

/// Outward area vector of an inlet-like tag, summed over its facets.
template <int Dim>
Point<Dim> tag_area_vector(const Mesh<Dim>& mesh, BoundaryTag tag) {
  Point<Dim> s{};
  for (int f = 0; f < mesh.facet_count(); ++f) {
    if (mesh.facet(f).tag != tag) continue;
    const auto a = facet_area_vector<Dim, double>(mesh.facet_points(f), mesh.facet_opposite_point(f));
    for (int k = 0; k < Dim; ++k) s[k] += a[k];
  }
  return s;
}

/// Prescribed inflow velocity (pointing into the domain).
template <int Dim>
std::function<double(const Point<Dim>&, int)> inlet_velocity(const Mesh<Dim>& mesh,
                                                            const InletSpec& inlet) {
  if (!mesh.has_tag(BoundaryTag::Inlet)) throw MeshError("mesh has no inlet facets");
  Point<Dim> n = tag_area_vector(mesh, BoundaryTag::Inlet);
  double nn = 0.0;
  for (double c : n) nn += c * c;
  nn = std::sqrt(nn);
  if (!(nn > 0.0)) throw MeshError("inlet has zero net area");
  for (auto& c : n) c /= nn;
  if (inlet.profile == InletProfile::Uniform) {
    const double u = inlet.u_in;
    return [n, u](const Point<Dim>&, int comp) { return -n[comp] * u; };
  }
  // Parabolic: product of 6 s (1 - s) over each tangential extent of the inlet.
  std::array<Point<Dim>, Dim - 1> t{};
  if constexpr (Dim == 2) {
    t[0] = {-n[1], n[0]};
  } else {
    Point<Dim> e{1.0, 0.0, 0.0};
    if (std::abs(n[0]) > 0.9) e = {0.0, 1.0, 0.0};
    double d = e[0] * n[0] + e[1] * n[1] + e[2] * n[2];
    for (int k = 0; k < 3; ++k) t[0][k] = e[k] - d * n[k];
    const double l = std::sqrt(t[0][0] * t[0][0] + t[0][1] * t[0][1] + t[0][2] * t[0][2]);
    for (auto& c : t[0]) c /= l;
    t[1] = {n[1] * t[0][2] - n[2] * t[0][1], n[2] * t[0][0] - n[0] * t[0][2],
            n[0] * t[0][1] - n[1] * t[0][0]};
  }
  std::array<double, Dim - 1> lo, hi;
  lo.fill(std::numeric_limits<double>::infinity());
  hi.fill(-std::numeric_limits<double>::infinity());
  const auto mark = vertices_on_tags(mesh, std::array{BoundaryTag::Inlet});
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    if (!mark[v]) continue;
    for (int k = 0; k < Dim - 1; ++k) {
      double s = 0.0;
      for (int a = 0; a < Dim; ++a) s += t[k][a] * mesh.vertex(v)[a];
      lo[k] = std::min(lo[k], s);
      hi[k] = std::max(hi[k], s);
    }
  }
  const double u = inlet.u_in;
  return [n, t, lo, hi, u](const Point<Dim>& x, int comp) {
    double prof = 1.0;
    for (int k = 0; k < Dim - 1; ++k) {
      double s = 0.0;
      for (int a = 0; a < Dim; ++a) s += t[k][a] * x[a];
      const double xi = hi[k] > lo[k] ? (s - lo[k]) / (hi[k] - lo[k]) : 0.5;
      prof *= 6.0 * xi * (1.0 - xi);
    }
    return -n[comp] * u * prof;
  };
}

/// Inlet profile on Inlet, no-slip on every wall tag present. Walls override
/// the inlet on shared vertices.
template <int Dim>
std::vector<DirichletBC<Dim>> flow_bcs(const Mesh<Dim>& mesh, const InletSpec& inlet) {
  std::vector<int> comps;
  for (int a = 0; a < Dim; ++a) comps.push_back(a);
  std::vector<DirichletBC<Dim>> bcs;
  bcs.push_back({{BoundaryTag::Inlet}, comps, inlet_velocity(mesh, inlet)});
  std::vector<BoundaryTag> walls;
  for (auto t : {BoundaryTag::CylWall, BoundaryTag::PackingJacket, BoundaryTag::Packing})
    if (mesh.has_tag(t)) walls.push_back(t);
  if (!walls.empty()) bcs.push_back(DirichletBC<Dim>::constant(walls, 0.0, comps));
  return bcs;
}

/// Sum over facets with `tag` of the integral of u.n.
template <int Dim>
double boundary_flux(const Mesh<Dim>& mesh, const NoDeduce<VectorField<Dim>>& u, BoundaryTag tag) {
  double s = 0.0;
  for (int f = 0; f < mesh.facet_count(); ++f) {
    const auto& bf = mesh.facet(f);
    if (bf.tag != tag) continue;
    const auto a = facet_area_vector<Dim, double>(mesh.facet_points(f), mesh.facet_opposite_point(f));
    for (int v : bf.vertices)
      for (int k = 0; k < Dim; ++k) s += u[v][k] * a[k] / Dim;
  }
  return s;
}

/// L2 norm of the discrete divergence.
template <int Dim>
double divergence_l2(const Mesh<Dim>& mesh, const NoDeduce<VectorField<Dim>>& u) {
  double s = 0.0;
  for (int c = 0; c < mesh.cell_count(); ++c) {
    const auto g = simplex_geometry<Dim, double>(mesh.cell_points(c));
    double div = 0.0;
    for (int i = 0; i <= Dim; ++i)
      for (int a = 0; a < Dim; ++a) div += u[mesh.cell(c)[i]][a] * g.grad[i][a];
    s += g.volume * div * div;
  }
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// Nonlinear solve

struct FlowSolverConfig {
  NewtonConfig newton;
  FlowStabilization stab;
  bool continuation = true;        // viscosity continuation when direct Newton fails
  bool force_continuation = false;
  int continuation_steps = 4;
  double continuation_factor = 4.0;  // viscosity ratio between consecutive steps
};

struct FlowSolveReport {
  int newton_iterations = 0;
  std::vector<double> residual_norms;  // trace of the final Newton run
  bool used_continuation = false;
  double divergence_l2 = 0.0;
  double mass_imbalance = 0.0;  // |Q_in + Q_out| / |Q_in|
};

namespace detail {

template <int Dim>
struct FlowProblem {
  const Mesh<Dim>& mesh;
  FluidProps props;
  FlowKernelOptions opt;
  std::vector<std::pair<int, double>> dirichlet;

  Vector residual(const Vector& w) const {
    Vector r = flow_residual(mesh, FlowState<Dim>{w}, props, opt);
    for (const auto& [dof, g] : dirichlet) r[dof] = w[dof] - g;
    return r;
  }
  SparseMatrix jacobian(const Vector& w) const {
    SparseMatrix j = flow_jacobian(mesh, FlowState<Dim>{w}, props, opt);
    Vector dummy = Vector::Zero(j.rows());
    std::vector<std::pair<int, double>> zero;
    zero.reserve(dirichlet.size());
    for (const auto& d : dirichlet) zero.emplace_back(d.first, 0.0);
    apply_dirichlet(j, dummy, zero);
    return j;
  }
  NewtonTrace run(Vector& w, const NewtonConfig& cfg, double reference) const {
    return newton_solve([this](const Vector& v) { return residual(v); },
                        [this](const Vector& v) { return jacobian(v); }, w, cfg, reference);
  }
};

}  // namespace detail

/// Solves the stabilized Navier-Stokes system by Newton's method.
///
/// Starting point: `initial` if given, else a Stokes solve. If Newton fails
/// from there, viscosity continuation over `continuation_steps` geometric
/// steps ending at the physical viscosity is attempted. Convergence is
/// measured against the residual of the boundary-lift state.
template <int Dim>
FlowState<Dim> solve_flow(const Mesh<Dim>& mesh, const FluidProps& props, const InletSpec& inlet,
                          const FlowSolverConfig& cfg = {},
                          const NoDeduce<FlowState<Dim>>* initial = nullptr,
                          FlowSolveReport* report = nullptr) {
  props.validate();
  FunctionSpace<Dim> space(mesh, Dim + 1);
  const auto bcs = flow_bcs(mesh, inlet);
  const auto dirichlet = dirichlet_dofs(space, std::span<const DirichletBC<Dim>>(bcs));

  Vector lift = Vector::Zero(space.size());
  for (const auto& [dof, g] : dirichlet) lift[dof] = g;

  detail::FlowProblem<Dim> ns{mesh, props, {cfg.stab, true}, dirichlet};
  const double reference = ns.residual(lift).norm();

  FlowSolveReport rep;
  Vector w;
  bool done = false;

  auto try_newton = [&](Vector& start) {
    try {
      const auto trace = ns.run(start, cfg.newton, reference);
      rep.newton_iterations += trace.iterations;
      rep.residual_norms = trace.residual_norms;
      return true;
    } catch (const SolverError&) {
      return false;
    }
  };

  if (initial && !cfg.force_continuation) {
    if (initial->values.size() != space.size()) throw Error("solve_flow: initial state size mismatch");
    w = initial->values;
    for (const auto& [dof, g] : dirichlet) w[dof] = g;
    done = try_newton(w);
  }

  Vector stokes;
  if (!done) {
    detail::FlowProblem<Dim> st{mesh, props, {cfg.stab, false}, dirichlet};
    stokes = lift;
    const auto trace = st.run(stokes, cfg.newton, std::max(reference, st.residual(lift).norm()));
    rep.newton_iterations += trace.iterations;
    if (!cfg.force_continuation) {
      w = stokes;
      done = try_newton(w);
    }
  }

  if (!done) {
    if (!cfg.continuation && !cfg.force_continuation)
      throw NewtonDivergence("flow Newton failed and continuation is disabled", 0.0);
    rep.used_continuation = true;
    w = stokes;
    for (int k = cfg.continuation_steps - 1; k >= 0; --k) {
      FluidProps p = props;
      p.mu = props.mu * std::pow(cfg.continuation_factor, k);
      detail::FlowProblem<Dim> step{mesh, p, {cfg.stab, true}, dirichlet};
      const double ref_k = step.residual(lift).norm();
      const auto trace = step.run(w, cfg.newton, ref_k);
      rep.newton_iterations += trace.iterations;
      rep.residual_norms = trace.residual_norms;
    }
    // The last step runs at the physical viscosity; tighten to the caller's reference.
    const auto trace = ns.run(w, cfg.newton, reference);
    rep.newton_iterations += trace.iterations;
  }

  FlowState<Dim> out{w};
  const auto u = out.velocity_field();
  rep.divergence_l2 = divergence_l2(mesh, u);
  const double q_in = boundary_flux(mesh, u, BoundaryTag::Inlet);
  const double q_out = mesh.has_tag(BoundaryTag::Outlet) ? boundary_flux(mesh, u, BoundaryTag::Outlet) : 0.0;
  rep.mass_imbalance = q_in != 0.0 ? std::abs(q_in + q_out) / std::abs(q_in) : 0.0;
  if (report) *report = rep;
  return out;
}

}  // namespace packopt
