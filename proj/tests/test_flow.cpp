#include <gtest/gtest.h>

#include "support.hpp"

using namespace packopt;
using namespace packopt::testing;

namespace {

FlowState<2> random_state(const Mesh<2>& mesh, unsigned seed, double u_scale, double p_scale) {
  FlowState<2> s = FlowState<2>::zeros(mesh.vertex_count());
  const Vector r = random_vector(static_cast<int>(s.values.size()), seed);
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    s.values[3 * v] = u_scale * r[3 * v];
    s.values[3 * v + 1] = u_scale * r[3 * v + 1];
    s.values[3 * v + 2] = p_scale * r[3 * v + 2];
  }
  return s;
}

Mesh<2> channel(int nx, int ny, double length, double height) {
  RectSpec s;
  s.x1 = length;
  s.y1 = height;
  s.nx = nx;
  s.ny = ny;
  s.pattern = DiagonalPattern::Alternating;
  return rectangle_mesh(s);
}

}  // namespace

TEST(TauFlow, DiffusiveLimitAtRest) {
  const auto mesh = unit_square(3);
  FluidProps props;
  const VectorField<2> u(mesh.vertex_count(), Point<2>{0.0, 0.0});
  const auto tau = compute_tau_flow(mesh, u, props);
  for (int c = 0; c < mesh.cell_count(); ++c) {
    const double h = cell_diameter(mesh, c);
    EXPECT_NEAR(tau.tau_mom[c], h * h / (4.0 * props.mu), 1e-12 * h * h / props.mu);
    EXPECT_EQ(tau.tau_lsic[c], 0.0);
  }
}

TEST(TauFlow, ConvectiveLimit) {
  EXPECT_NEAR(tau_momentum(1.0, 0.1, 1.0, 1e-14), 0.05, 1e-12);
}

TEST(TauFlow, DefaultFluidNearInletSpeed) {
  FluidProps props;
  const double tau = tau_momentum(0.933 * 0.933, 2.5e-4, props.rho, props.mu);
  EXPECT_NEAR(tau, 1.17e-4, 0.005 * 1.17e-4);
}

TEST(TauFlow, UsesMidpointVelocityAndDiameter) {
  const auto mesh = one_triangle();
  FluidProps props{1e-3, 2.0};
  const VectorField<2> u{{0.3, 0.0}, {0.6, 0.3}, {0.0, 0.6}};
  const auto tau = compute_tau_flow(mesh, u, props);
  const double n = std::hypot(0.3, 0.3);
  const double h = std::sqrt(2.0);
  EXPECT_NEAR(tau.tau_mom[0], tau_momentum(n * n, h, 2.0, 1e-3), 1e-15);
  EXPECT_NEAR(tau.tau_lsic[0], 0.5 * 2.0 * n * h, 1e-14);
}

TEST(TauFlow, RejectsNonFiniteVelocity) {
  const auto mesh = one_triangle();
  VectorField<2> u(3, Point<2>{0.0, 0.0});
  u[1][0] = std::nan("");
  EXPECT_THROW(compute_tau_flow(mesh, u, FluidProps{}), Error);
}

TEST(FlowResidual, ZeroStateIsZero) {
  const auto mesh = small_packed_channel();
  const auto r = flow_residual(mesh, FlowState<2>::zeros(mesh.vertex_count()), FluidProps{});
  EXPECT_EQ(r.lpNorm<Eigen::Infinity>(), 0.0);
}

TEST(FlowResidual, RejectsNonFiniteState) {
  const auto mesh = unit_square(2);
  auto s = FlowState<2>::zeros(mesh.vertex_count());
  s.values[4] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(flow_residual(mesh, s, FluidProps{}), Error);
}

// Shear flow u = (a y, 0) with constant pressure solves the convective
// equations exactly, so every stabilization term must vanish.
TEST(FlowResidual, StabilizationVanishesOnExactLinearSolution) {
  const auto mesh = unit_square(5, DiagonalPattern::CrissCross);
  FluidProps props{1e-2, 1.5};
  auto s = FlowState<2>::zeros(mesh.vertex_count());
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    s.values[3 * v] = 0.7 * mesh.vertex(v)[1];
    s.values[3 * v + 2] = 3.0;
  }
  FlowKernelOptions plain;
  plain.stab = {false, false, false};
  const Vector r0 = flow_residual(mesh, s, props, plain);
  for (FlowStabilization stab : {FlowStabilization{true, false, false}, FlowStabilization{false, true, false},
                                 FlowStabilization{false, false, true}, FlowStabilization{}}) {
    FlowKernelOptions opt;
    opt.stab = stab;
    const Vector r = flow_residual(mesh, s, props, opt);
    EXPECT_LT((r - r0).lpNorm<Eigen::Infinity>(), 1e-13 * (1.0 + r0.lpNorm<Eigen::Infinity>()));
  }
}

TEST(FlowJacobian, MatchesCentralDifferences) {
  const auto mesh = small_packed_channel(8, 4);
  FluidProps props;
  const auto s = random_state(mesh, 11, 0.9, 2.0);
  const SparseMatrix j = flow_jacobian(mesh, s, props);
  for (unsigned seed : {1u, 2u, 3u}) {
    const Vector dir = random_state(mesh, 100 + seed, 1.0, 2.0).values;
    const Vector jv = j * dir;
    for (double eps : {1e-4, 1e-5, 1e-6, 1e-7}) {
      const Vector rp = flow_residual(mesh, FlowState<2>{s.values + eps * dir}, props);
      const Vector rm = flow_residual(mesh, FlowState<2>{s.values - eps * dir}, props);
      const Vector fd = (rp - rm) / (2.0 * eps);
      EXPECT_LT((fd - jv).norm() / jv.norm(), 1e-5) << "eps " << eps;
    }
  }
}

TEST(FlowJacobian, MatchesCentralDifferencesStokesAndUnstabilized) {
  const auto mesh = unit_square(4, DiagonalPattern::Alternating);
  FluidProps props{0.05, 1.0};
  const auto s = random_state(mesh, 5, 1.0, 1.0);
  for (FlowKernelOptions opt : {FlowKernelOptions{{false, false, false}, true}, FlowKernelOptions{{}, false}}) {
    const Vector dir = random_state(mesh, 6, 1.0, 1.0).values;
    const Vector jv = flow_jacobian(mesh, s, props, opt) * dir;
    const double eps = 1e-6;
    const Vector fd = (flow_residual(mesh, FlowState<2>{s.values + eps * dir}, props, opt) -
                       flow_residual(mesh, FlowState<2>{s.values - eps * dir}, props, opt)) /
                      (2.0 * eps);
    EXPECT_LT((fd - jv).norm() / jv.norm(), 1e-5);
  }
}

TEST(FlowJacobian, MatchesCentralDifferences3D) {
  BoxSpec b;
  b.n = {2, 2, 2};
  const auto mesh = box_mesh(b);
  FluidProps props{0.02, 1.0};
  auto s = FlowState<3>::zeros(mesh.vertex_count());
  s.values = random_vector(static_cast<int>(s.values.size()), 21);
  const Vector dir = random_vector(static_cast<int>(s.values.size()), 22);
  const Vector jv = flow_jacobian(mesh, s, props) * dir;
  const double eps = 1e-6;
  const Vector fd = (flow_residual(mesh, FlowState<3>{s.values + eps * dir}, props) -
                     flow_residual(mesh, FlowState<3>{s.values - eps * dir}, props)) /
                    (2.0 * eps);
  EXPECT_LT((fd - jv).norm() / jv.norm(), 1e-5);
}

TEST(SolveFlow, ZeroInflowGivesZeroState) {
  const auto mesh = small_packed_channel();
  InletSpec inlet;
  inlet.u_in = 0.0;
  FlowSolveReport rep;
  const auto s = solve_flow(mesh, FluidProps{}, inlet, {}, nullptr, &rep);
  EXPECT_EQ(s.values.lpNorm<Eigen::Infinity>(), 0.0);
  EXPECT_EQ(rep.mass_imbalance, 0.0);
}

TEST(SolveFlow, DirichletDataHeldExactly) {
  const auto mesh = small_packed_channel();
  const auto s = solve_flow(mesh, FluidProps{}, InletSpec{});
  const auto inlet = vertices_on_tags(mesh, std::array{BoundaryTag::Inlet});
  const auto walls =
      vertices_on_tags(mesh, std::array{BoundaryTag::CylWall, BoundaryTag::Packing});
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    if (walls[v]) {
      EXPECT_EQ(s.velocity(v)[0], 0.0);
      EXPECT_EQ(s.velocity(v)[1], 0.0);
    } else if (inlet[v]) {
      EXPECT_EQ(s.velocity(v)[0], 0.933);
      EXPECT_EQ(s.velocity(v)[1], 0.0);
    }
  }
}

TEST(SolveFlow, ConvergedStateIsAFixedPoint) {
  const auto mesh = small_packed_channel();
  FlowSolverConfig cfg;
  cfg.newton.rel_tol = 1e-10;
  const auto s = solve_flow(mesh, FluidProps{}, InletSpec{}, cfg);
  FlowSolveReport rep;
  const auto again = solve_flow(mesh, FluidProps{}, InletSpec{}, cfg, &s, &rep);
  EXPECT_EQ(rep.newton_iterations, 0);
  EXPECT_FALSE(rep.used_continuation);
  EXPECT_EQ(again.values, s.values);
}

TEST(SolveFlow, MassBalanceOnDeskCase) {
  const auto mesh = make_channel_mesh(desk_channel());
  FlowSolveReport rep;
  solve_flow(mesh, FluidProps{}, InletSpec{}, {}, nullptr, &rep);
  EXPECT_LE(rep.mass_imbalance, 1e-3);
  EXPECT_GT(rep.divergence_l2, 0.0);
}

TEST(SolveFlow, ContinuationMatchesDirectSolve) {
  const auto mesh = small_packed_channel();
  FlowSolverConfig direct;
  direct.newton.rel_tol = 1e-11;
  FlowSolveReport rd, rc;
  const auto a = solve_flow(mesh, FluidProps{}, InletSpec{}, direct, nullptr, &rd);
  ASSERT_FALSE(rd.used_continuation);
  FlowSolverConfig cont = direct;
  cont.force_continuation = true;
  const auto b = solve_flow(mesh, FluidProps{}, InletSpec{}, cont, nullptr, &rc);
  ASSERT_TRUE(rc.used_continuation);
  Vector ua(2 * mesh.vertex_count()), ub(2 * mesh.vertex_count());
  for (int v = 0; v < mesh.vertex_count(); ++v)
    for (int k = 0; k < 2; ++k) {
      ua[2 * v + k] = a.velocity(v)[k];
      ub[2 * v + k] = b.velocity(v)[k];
    }
  EXPECT_LT((ua - ub).norm() / ua.norm(), 1e-6);
}

TEST(SolveFlow, DisabledContinuationReportsDivergence) {
  const auto mesh = small_packed_channel();
  FlowSolverConfig cfg;
  cfg.newton.max_iter = 1;
  cfg.continuation = false;
  EXPECT_THROW(solve_flow(mesh, FluidProps{}, InletSpec{}, cfg), SolverError);
}

TEST(SolveFlow, RejectsInvalidFluid) {
  const auto mesh = unit_square(2);
  EXPECT_THROW(solve_flow(mesh, FluidProps{0.0, 1.0}, InletSpec{}), ConfigError);
}

TEST(SolveFlow, PlanePoiseuille) {
  const double length = 4e-3, height = 1e-3, ubar = 0.01;
  const auto mesh = channel(128, 32, length, height);
  FluidProps props;
  InletSpec inlet{ubar, InletProfile::Parabolic};
  FlowSolveReport rep;
  const auto s = solve_flow(mesh, props, inlet, {}, nullptr, &rep);

  // L2 error of the streamwise velocity over the domain, lumped per vertex.
  const Vector lumped = mass_matrix(FunctionSpace<2>(mesh, 1)) * Vector::Ones(mesh.vertex_count());
  double err = 0.0, ref = 0.0;
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    const double y = mesh.vertex(v)[1];
    const double exact = 6.0 * ubar * y * (height - y) / (height * height);
    const auto u = s.velocity(v);
    err += lumped[v] * ((u[0] - exact) * (u[0] - exact) + u[1] * u[1]);
    ref += lumped[v] * exact * exact;
  }
  EXPECT_LT(std::sqrt(err / ref), 0.02);
  const double dp_exact = 12.0 * props.mu * ubar * length / (height * height);
  EXPECT_NEAR(pressure_drop(mesh, s), dp_exact, 0.05 * dp_exact);
  EXPECT_LT(rep.mass_imbalance, 1e-3);
}

TEST(SolveFlow, BoxChannel3D) {
  BoxSpec b;
  b.hi = {4e-3, 1e-3, 1e-3};
  b.n = {8, 3, 3};
  const auto mesh = box_mesh(b);
  InletSpec inlet{0.05, InletProfile::Parabolic};
  FlowSolveReport rep;
  const auto s = solve_flow(mesh, FluidProps{}, inlet, {}, nullptr, &rep);
  EXPECT_LT(rep.mass_imbalance, 1e-2);
  EXPECT_GT(pressure_drop(mesh, s), 0.0);
  EXPECT_GT(volume_flow_rate(mesh, s.velocity_field()), 0.0);
}

TEST(BoundaryFlux, UniformFieldThroughSquare) {
  const auto mesh = unit_square(4);
  const VectorField<2> u(mesh.vertex_count(), Point<2>{2.0, 0.5});
  EXPECT_NEAR(boundary_flux(mesh, u, BoundaryTag::Inlet), -2.0, 1e-14);
  EXPECT_NEAR(boundary_flux(mesh, u, BoundaryTag::Outlet), 2.0, 1e-14);
  EXPECT_NEAR(boundary_flux(mesh, u, BoundaryTag::CylWall), 0.0, 1e-14);
  EXPECT_NEAR(divergence_l2(mesh, u), 0.0, 1e-14);
}
