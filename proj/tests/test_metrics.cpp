#include <gtest/gtest.h>

#include <numbers>

#include "support.hpp"

using namespace packopt;
using namespace packopt::testing;

namespace {

Mesh<2> channel(int nx, int ny, double length, double height, RectTags tags = {}) {
  RectSpec s;
  s.x1 = length;
  s.y1 = height;
  s.nx = nx;
  s.ny = ny;
  s.pattern = DiagonalPattern::Alternating;
  s.tags = tags;
  return rectangle_mesh(s);
}

// Reported pairs: rounded values of the initial and optimized geometry.
constexpr double kFlowPerArea = 1.9194e-2;
constexpr double kCoutInitial = 45.38;
constexpr double kCoutOptimized = 38.7;
constexpr double kAreaGrowth = 1.007;

}  // namespace

TEST(VolumeFlowRate, UniformNormalInflow) {
  const double height = 2e-3;
  const auto mesh = channel(8, 10, 8e-3, height);
  const VectorField<2> u(mesh.vertex_count(), Point<2>{0.933, 0.0});
  EXPECT_NEAR(volume_flow_rate(mesh, u), 0.933 * height, 1e-15);
}

TEST(VolumeFlowRate, TangentialFieldCarriesNothing) {
  const auto mesh = channel(4, 6, 1.0, 1.0);
  const VectorField<2> u(mesh.vertex_count(), Point<2>{0.0, 2.5});
  EXPECT_NEAR(volume_flow_rate(mesh, u), 0.0, 1e-15);
}

// The P1 interpolant of the parabola integrates by the trapezoidal rule,
// whose error for 6 s (1 - s) on n equal segments is exactly 1/n^2.
TEST(VolumeFlowRate, ParabolicProfile) {
  const double height = 1e-3, ubar = 0.2;
  for (int n : {8, 32}) {
    const auto mesh = channel(4, n, 4e-3, height);
    const auto g = inlet_velocity(mesh, InletSpec{ubar, InletProfile::Parabolic});
    VectorField<2> u(mesh.vertex_count());
    double peak = 0.0;
    for (int v = 0; v < mesh.vertex_count(); ++v) {
      u[v] = {g(mesh.vertex(v), 0), g(mesh.vertex(v), 1)};
      peak = std::max(peak, u[v][0]);
    }
    EXPECT_NEAR(peak, 1.5 * ubar, 1e-12);
    const double trapezoid = ubar * height * (1.0 - 1.0 / (n * n));
    EXPECT_NEAR(volume_flow_rate(mesh, u), trapezoid, 1e-12 * ubar * height);
  }
}

TEST(VolumeFlowRate, RequiresInlet) {
  RectTags t;
  t.left = BoundaryTag::CylWall;
  const auto mesh = channel(2, 2, 1.0, 1.0, t);
  EXPECT_THROW(volume_flow_rate(mesh, VectorField<2>(mesh.vertex_count())), MetricError);
}

TEST(GeometricArea, UnitSquareObstacle) {
  const auto mesh = small_packed_channel(4, 4, 2.0, 2.0);
  EXPECT_NEAR(geometric_area(mesh), 4.0, 1e-14);
}

TEST(GeometricArea, CylinderJacketConvergesToLateralArea) {
  const double r = 0.5, h = 2.0;
  double prev_err = 1.0;
  for (int segments : {16, 32, 64}) {
    CylinderSpec s;
    s.radius = r;
    s.height = h;
    s.segments = segments;
    s.layers = 2;
    s.rings = 2;
    const auto mesh = cylinder_mesh(s);
    const double a = geometric_area(mesh);
    const double polygon = segments * 2.0 * r * std::sin(std::numbers::pi / segments) * h;
    EXPECT_NEAR(a, polygon, 1e-12 * polygon);
    const double err = std::abs(a / (2.0 * std::numbers::pi * r * h) - 1.0);
    EXPECT_LT(err, prev_err / 3.5);
    prev_err = err;
  }
  EXPECT_LT(prev_err, 2e-3);
}

TEST(GeometricArea, NoPackingIsAnError) {
  EXPECT_THROW(geometric_area(channel(2, 2, 1.0, 1.0)), MetricError);
}

TEST(OutletConcentration, ConstantFieldIndependentOfFlow) {
  const auto mesh = channel(6, 7, 1.0, 1.0);
  VectorField<2> u(mesh.vertex_count());
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    const double y = mesh.vertex(v)[1];
    u[v] = {0.1 + y * y, 0.3 * y};
  }
  EXPECT_NEAR(outlet_concentration(mesh, u, Vector::Constant(mesh.vertex_count(), 5.0)), 5.0, 1e-14);
}

TEST(OutletConcentration, WeightedAverageArithmetic) {
  const std::array<double, 2> flux{1.0, 3.0}, c{1.0, 3.0};
  EXPECT_DOUBLE_EQ(flux_weighted_average(flux, c), 2.5);
}

TEST(OutletConcentration, Guards) {
  const std::array<double, 2> zero{1.0, -1.0}, c{1.0, 3.0};
  EXPECT_THROW(flux_weighted_average(zero, c), MetricError);
  const std::array<double, 1> short_c{1.0};
  EXPECT_THROW(flux_weighted_average(zero, short_c), MetricError);
  const auto mesh = channel(3, 3, 1.0, 1.0);
  const VectorField<2> still(mesh.vertex_count(), Point<2>{0.0, 0.0});
  EXPECT_THROW(outlet_concentration(mesh, still, Vector::Ones(mesh.vertex_count())), MetricError);
  EXPECT_THROW(outlet_concentration(mesh, still, Vector::Ones(3)), MetricError);
}

// Linear c and linear u along the outlet: the facet product rule must give
// the exact integral of the quadratic integrand.
TEST(OutletConcentration, ExactForLinearData) {
  const auto mesh = channel(2, 5, 1.0, 1.0);
  VectorField<2> u(mesh.vertex_count());
  Vector c(mesh.vertex_count());
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    const double y = mesh.vertex(v)[1];
    u[v] = {1.0 + y, 0.0};
    c[v] = 2.0 + 3.0 * y;
  }
  // int (1+y)(2+3y) dy = 2 + 5/2 + 1 = 5.5; int (1+y) dy = 1.5
  EXPECT_NEAR(outlet_concentration(mesh, u, c), 5.5 / 1.5, 1e-14);
}

TEST(Beta, ZeroWhenOutletEqualsInlet) {
  EXPECT_EQ(beta(1.0, 2.0, 100.0, 1.0, 100.0), 0.0);
}

TEST(Beta, InitialReportedValue) {
  EXPECT_NEAR(beta(kFlowPerArea, 1.0, 100.0, 1.0, kCoutInitial), 1.54e-2, 0.005 * 1.54e-2);
}

TEST(Beta, OptimizedReportedValue) {
  EXPECT_NEAR(beta(kFlowPerArea, kAreaGrowth, 100.0, 1.0, kCoutOptimized), 1.84e-2, 0.01 * 1.84e-2);
}

TEST(Beta, ReportedImprovementRatio) {
  const double b0 = beta(kFlowPerArea, 1.0, 100.0, 1.0, kCoutInitial);
  const double b1 = beta(kFlowPerArea, kAreaGrowth, 100.0, 1.0, kCoutOptimized);
  EXPECT_NEAR(b1 / b0, 1.195, 0.01);
  EXPECT_NEAR(b1 / b0 - 1.0, 0.197, 0.01);
}

TEST(Beta, StrictlyDecreasingInOutletConcentration) {
  double prev = std::numeric_limits<double>::infinity();
  for (double c = 1.5; c <= 100.0; c += 0.5) {
    const double b = beta(1e-3, 2e-2, 100.0, 1.0, c);
    EXPECT_LT(b, prev) << c;
    prev = b;
  }
  EXPECT_EQ(prev, 0.0);
}

TEST(Beta, MirroredInterval) {
  const double b = beta(1.0, 1.0, 1.0, 100.0, 40.0);
  EXPECT_NEAR(b, std::log(99.0 / 60.0), 1e-14);
}

TEST(Beta, RejectsUnphysicalOutletValues) {
  EXPECT_THROW(beta(1.0, 1.0, 100.0, 1.0, 1.0), MetricError);
  EXPECT_THROW(beta(1.0, 1.0, 100.0, 1.0, 0.5), MetricError);
  EXPECT_THROW(beta(1.0, 1.0, 100.0, 1.0, 100.5), MetricError);
  EXPECT_THROW(beta(1.0, 0.0, 100.0, 1.0, 50.0), MetricError);
}

TEST(PressureDrop, ZeroFlow) {
  const auto mesh = small_packed_channel();
  EXPECT_EQ(pressure_drop(mesh, FlowState<2>::zeros(mesh.vertex_count())), 0.0);
}

TEST(PressureDrop, ReversedFlowFlipsSign) {
  const double length = 4e-3, height = 1e-3;
  RectTags reversed;
  reversed.left = BoundaryTag::Outlet;
  reversed.right = BoundaryTag::Inlet;
  const auto forward = channel(32, 8, length, height);
  const auto backward = channel(32, 8, length, height, reversed);
  InletSpec inlet{0.01, InletProfile::Parabolic};
  const auto a = solve_flow(forward, FluidProps{}, inlet);
  const auto b = solve_flow(backward, FluidProps{}, inlet);
  const double dp = pressure_drop(forward, a);
  EXPECT_GT(dp, 0.0);
  // Left-minus-right pressure of the reversed flow, measured with the forward tags.
  EXPECT_NEAR(pressure_drop(forward, b), -dp, 0.01 * dp);
}

TEST(PressureDrop, RequiresBothTags) {
  RectTags t;
  t.right = BoundaryTag::CylWall;
  const auto mesh = channel(2, 2, 1.0, 1.0, t);
  EXPECT_THROW(pressure_drop(mesh, FlowState<2>::zeros(mesh.vertex_count())), MetricError);
}

TEST(EvaluateCase, ChannelWithoutPackingFails) {
  const auto mesh = channel(16, 4, 4e-3, 1e-3);
  EXPECT_THROW(evaluate_case(mesh, PhysicsConfig{}), MetricError);
}

TEST(EvaluateCase, DeskCaseIsFiniteAndDeterministic) {
  const auto mesh = make_channel_mesh(desk_channel());
  const auto a = evaluate_case(mesh, PhysicsConfig{});
  const auto b = evaluate_case(mesh, PhysicsConfig{});
  for (double x : {a.beta, a.c_out, a.vdot, a.a_geo, a.dp, a.J}) EXPECT_TRUE(std::isfinite(x));
  EXPECT_GT(a.c_out, 1.0);
  EXPECT_LT(a.c_out, 100.0);
  EXPECT_GT(a.dp, 0.0);
  EXPECT_EQ(a.J, a.beta);
  EXPECT_NEAR(a.beta, a.vdot / a.a_geo * std::log(99.0 / (a.c_out - 1.0)), 1e-12 * a.beta);
  EXPECT_EQ(a.beta, b.beta);
  EXPECT_EQ(a.c_out, b.c_out);
  EXPECT_EQ(a.vdot, b.vdot);
  EXPECT_EQ(a.a_geo, b.a_geo);
  EXPECT_EQ(a.dp, b.dp);
}

TEST(EvaluateCase, InletFlowRateMatchesUniformInflow) {
  const auto spec = desk_channel();
  const auto mesh = make_channel_mesh(spec);
  const auto m = evaluate_case(mesh, PhysicsConfig{});
  // Wall vertices at the inlet corners carry zero velocity.
  EXPECT_NEAR(m.vdot, 0.933 * spec.height, 0.05 * 0.933 * spec.height);
  EXPECT_LT(m.vdot, 0.933 * spec.height);
}

// The outlet volume flux carried by the flow field settles under refinement.
TEST(Refinement, OutletFlowFluxSettles) {
  std::vector<double> flux;
  for (double h : {6e-5, 4.2e-5}) {
    auto spec = desk_channel();
    spec.h = h;
    const auto mesh = make_channel_mesh(spec);
    const auto s = solve_flow(mesh, FluidProps{}, InletSpec{});
    flux.push_back(boundary_flux(mesh, s.velocity_field(), BoundaryTag::Outlet));
  }
  EXPECT_LT(std::abs(flux[1] / flux[0] - 1.0), 0.01);
}
