#pragma once

// Scalar diagnostics of a solved case and the objective
//
//   beta = (Vdot / A_geo) * ln((c_pack - c_in) / (c_pack - c_out)).

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "packopt/error.hpp"
#include "packopt/flow.hpp"
#include "packopt/mesh.hpp"
#include "packopt/transport.hpp"

namespace packopt {

struct CaseMetrics {
  double beta = 0.0;   // [m/s]
  double c_out = 0.0;  // [mol/m^3]
  double vdot = 0.0;   // [m^3/s], per unit depth in 2D
  double a_geo = 0.0;  // [m^2], per unit depth in 2D
  double dp = 0.0;     // [Pa]
  double J = 0.0;      // objective, equal to beta
};

/// Everything needed to evaluate a case on a given mesh.
struct PhysicsConfig {
  FluidProps fluid;
  TransportProps transport;
  InletSpec inlet;
  FlowSolverConfig flow;
  TransportSolverConfig transport_solver;
};

/// Mass-matrix weights of the P1 facet product: int_F phi_i phi_j = M_ij |F|.
template <int Dim>
constexpr double facet_mass_weight(int i, int j) {
  return (i == j ? 2.0 : 1.0) / static_cast<double>(Dim * (Dim + 1));
}

/// |int_inlet u.n|.
template <int Dim>
double volume_flow_rate(const Mesh<Dim>& mesh, const NoDeduce<VectorField<Dim>>& u) {
  if (!mesh.has_tag(BoundaryTag::Inlet)) throw MetricError("volume flow rate: mesh has no inlet");
  return std::abs(boundary_flux(mesh, u, BoundaryTag::Inlet));
}

/// Total measure of Packing and PackingJacket facets.
template <int Dim>
double geometric_area(const Mesh<Dim>& mesh) {
  const double a = tagged_measure(mesh, BoundaryTag::Packing) +
                   tagged_measure(mesh, BoundaryTag::PackingJacket);
  if (!(a > 0.0)) throw MetricError("geometric area is zero: mesh has no packing facets");
  return a;
}

/// sum(flux_k * c_k) / sum(flux_k).
inline double flux_weighted_average(std::span<const double> flux, std::span<const double> value) {
  if (flux.size() != value.size()) throw MetricError("flux and value arrays differ in length");
  double fc = 0.0, f = 0.0;
  for (std::size_t k = 0; k < flux.size(); ++k) {
    fc += flux[k] * value[k];
    f += flux[k];
  }
  if (f == 0.0) throw MetricError("zero net flux");
  return fc / f;
}

/// int_out c u.n and int_out u.n, integrated exactly for P1 data.
template <int Dim>
std::pair<double, double> outlet_fluxes(const Mesh<Dim>& mesh, const NoDeduce<VectorField<Dim>>& u,
                                        const Vector& c) {
  double fc = 0.0, f = 0.0;
  for (int k = 0; k < mesh.facet_count(); ++k) {
    const auto& bf = mesh.facet(k);
    if (bf.tag != BoundaryTag::Outlet) continue;
    const auto a = facet_area_vector<Dim, double>(mesh.facet_points(k), mesh.facet_opposite_point(k));
    for (int j = 0; j < Dim; ++j) {
      double un = 0.0;
      for (int d = 0; d < Dim; ++d) un += u[bf.vertices[j]][d] * a[d];
      f += un / Dim;
      for (int i = 0; i < Dim; ++i) fc += facet_mass_weight<Dim>(i, j) * c[bf.vertices[i]] * un;
    }
  }
  return {fc, f};
}

/// Flow-averaged outlet concentration.
template <int Dim>
double outlet_concentration(const Mesh<Dim>& mesh, const NoDeduce<VectorField<Dim>>& u, const Vector& c) {
  if (!mesh.has_tag(BoundaryTag::Outlet)) throw MetricError("mesh has no outlet");
  if (static_cast<int>(c.size()) != mesh.vertex_count() ||
      static_cast<int>(u.size()) != mesh.vertex_count())
    throw MetricError("outlet concentration: field size mismatch");
  const auto [fc, f] = outlet_fluxes(mesh, u, c);
  if (f == 0.0) throw MetricError("outlet concentration: zero net outlet flux");
  return fc / f;
}

/// Logarithmic mass-transfer coefficient. Requires c_out in (c_pack, c_in]
/// (or the mirrored interval when c_in < c_pack).
template <class T>
T beta_value(const T& vdot, const T& a_geo, double c_in, double c_pack, const T& c_out) {
  using std::log;
  const double lo = std::min(c_in, c_pack), hi = std::max(c_in, c_pack);
  const double co = value_of(c_out);
  if (!(co > lo && co < hi) && co != c_in)
    throw MetricError("c_out = " + std::to_string(co) + " lies outside (" + std::to_string(lo) +
                      ", " + std::to_string(hi) + ")");
  if (!(value_of(a_geo) > 0.0)) throw MetricError("beta: nonpositive geometric area");
  return vdot / a_geo * log((c_pack - c_in) / (c_pack - c_out));
}

inline double beta(double vdot, double a_geo, double c_in, double c_pack, double c_out) {
  return beta_value<double>(vdot, a_geo, c_in, c_pack, c_out);
}

/// Area-averaged pressure on the inlet minus that on the outlet.
template <int Dim>
double pressure_drop(const Mesh<Dim>& mesh, const FlowState<Dim>& state) {
  auto average = [&](BoundaryTag tag) {
    double pa = 0.0, a = 0.0;
    for (int k = 0; k < mesh.facet_count(); ++k) {
      const auto& bf = mesh.facet(k);
      if (bf.tag != tag) continue;
      const double m = facet_normal_area(mesh, k).measure;
      double pm = 0.0;
      for (int v : bf.vertices) pm += state.pressure(v) / Dim;
      pa += m * pm;
      a += m;
    }
    if (!(a > 0.0))
      throw MetricError("pressure drop: no " + std::string(tag_name(tag)) + " facets");
    return pa / a;
  };
  return average(BoundaryTag::Inlet) - average(BoundaryTag::Outlet);
}

template <int Dim>
CaseMetrics compute_metrics(const Mesh<Dim>& mesh, const FlowState<Dim>& state, const Vector& c,
                            const TransportProps& tp) {
  const auto u = state.velocity_field();
  CaseMetrics m;
  m.a_geo = geometric_area(mesh);
  m.vdot = volume_flow_rate(mesh, u);
  m.c_out = outlet_concentration(mesh, u, c);
  m.beta = beta(m.vdot, m.a_geo, tp.c_in, tp.c_pack, m.c_out);
  m.dp = pressure_drop(mesh, state);
  m.J = m.beta;
  for (double x : {m.beta, m.c_out, m.vdot, m.a_geo, m.dp})
    if (!std::isfinite(x)) throw MetricError("non-finite case metric");
  return m;
}

template <int Dim>
struct CaseSolution {
  FlowState<Dim> flow;
  Vector c;
  CaseMetrics metrics;
  FlowSolveReport flow_report;
  TransportReport transport_report;
};

/// solve_flow, then solve_transport, then the metrics. `warm` seeds Newton.
template <int Dim>
CaseSolution<Dim> solve_case(const Mesh<Dim>& mesh, const PhysicsConfig& cfg,
                             const NoDeduce<FlowState<Dim>>* warm = nullptr) {
  cfg.transport.validate();
  geometric_area(mesh);  // fail before any solve when beta is undefined
  CaseSolution<Dim> s;
  s.flow = solve_flow(mesh, cfg.fluid, cfg.inlet, cfg.flow, warm, &s.flow_report);
  s.c = solve_transport(mesh, s.flow.velocity_field(), cfg.transport, cfg.transport_solver,
                        &s.transport_report);
  s.metrics = compute_metrics(mesh, s.flow, s.c, cfg.transport);
  return s;
}

template <int Dim>
CaseMetrics evaluate_case(const Mesh<Dim>& mesh, const PhysicsConfig& cfg) {
  return solve_case(mesh, cfg).metrics;
}

}  // namespace packopt
