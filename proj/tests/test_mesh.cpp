#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"

using namespace packopt;
using namespace packopt::testing;

TEST(CellVolume, UnitRightTriangle) {
  EXPECT_DOUBLE_EQ(cell_volume(one_triangle(), 0), 0.5);
}

TEST(CellVolume, UnitTetrahedron) {
  EXPECT_NEAR(cell_volume(one_tet(), 0), 1.0 / 6.0, 1e-15);
}

TEST(CellVolume, CoincidentVerticesGiveZero) {
  auto m = Mesh<2>::build_unchecked({{0, 0}, {1, 0}, {1, 0}}, {{0, 1, 2}});
  EXPECT_EQ(cell_volume(m, 0), 0.0);
}

TEST(CellVolume, IndexOutOfRangeThrows) {
  EXPECT_THROW(cell_volume(one_triangle(), 1), MeshError);
}

TEST(CellVolume, BuildOrientsClockwiseCellsPositively) {
  auto m = Mesh<2>::build({{0, 0}, {1, 0}, {0, 1}}, {{0, 2, 1}},
                          {{{0, 1}, BoundaryTag::CylWall},
                           {{1, 2}, BoundaryTag::Outlet},
                           {{2, 0}, BoundaryTag::Inlet}});
  EXPECT_DOUBLE_EQ(cell_volume(m, 0), 0.5);
}

TEST(FacetNormal, BottomEdgePointsDown) {
  auto m = one_triangle();
  for (int f = 0; f < m.facet_count(); ++f) {
    if (m.facet(f).tag != BoundaryTag::CylWall) continue;
    const auto na = facet_normal_area(m, f);
    EXPECT_NEAR(na.normal[0], 0.0, 1e-15);
    EXPECT_NEAR(na.normal[1], -1.0, 1e-15);
    EXPECT_DOUBLE_EQ(na.measure, 1.0);
  }
}

TEST(FacetNormal, LeftEdgeOfLengthTwo) {
  auto m = one_triangle({0, 0}, {1, 0}, {0, 2});
  for (int f = 0; f < m.facet_count(); ++f) {
    if (m.facet(f).tag != BoundaryTag::Inlet) continue;
    const auto na = facet_normal_area(m, f);
    EXPECT_NEAR(na.normal[0], -1.0, 1e-15);
    EXPECT_NEAR(na.normal[1], 0.0, 1e-15);
    EXPECT_DOUBLE_EQ(na.measure, 2.0);
  }
}

TEST(FacetNormal, UnitCubeFacesHaveAxisNormals) {
  BoxSpec s;
  s.n = {1, 1, 1};
  auto m = box_mesh(s);
  std::array<double, 6> area{};
  for (int f = 0; f < m.facet_count(); ++f) {
    const auto na = facet_normal_area(m, f);
    double len = 0.0;
    for (double c : na.normal) len += c * c;
    EXPECT_NEAR(std::sqrt(len), 1.0, 1e-14);
    int axis = 0;
    for (int a = 1; a < 3; ++a)
      if (std::abs(na.normal[a]) > std::abs(na.normal[axis])) axis = a;
    EXPECT_NEAR(std::abs(na.normal[axis]), 1.0, 1e-14);
    area[2 * axis + (na.normal[axis] > 0 ? 1 : 0)] += na.measure;
  }
  for (double a : area) EXPECT_NEAR(a, 1.0, 1e-14);
}

TEST(FacetNormal, OutwardOnEveryGeneratedFacet) {
  auto m = make_channel_mesh(desk_channel());
  for (int f = 0; f < m.facet_count(); ++f) {
    const auto na = facet_normal_area(m, f);
    const auto& opp = m.facet_opposite_point(f);
    const auto& p = m.vertex(m.facet(f).vertices[0]);
    EXPECT_LT(na.normal[0] * (opp[0] - p[0]) + na.normal[1] * (opp[1] - p[1]), 0.0);
  }
  EXPECT_THROW(facet_normal_area(m, m.facet_count()), MeshError);
}

TEST(CellQuality, EquilateralIsOne) {
  auto m = one_triangle({0, 0}, {1, 0}, {0.5, std::sqrt(3.0) / 2});
  EXPECT_NEAR(cell_quality(m, 0), 1.0, 1e-14);
}

TEST(CellQuality, RegularTetrahedronIsOne) {
  auto m = Mesh<3>::build_unchecked({{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}}, {{0, 2, 1, 3}});
  ASSERT_NEAR(cell_volume(m, 0), 8.0 / 3.0, 1e-14);
  EXPECT_NEAR(cell_quality(m, 0), 1.0, 1e-14);
}

TEST(CellQuality, CollinearIsZero) {
  auto m = Mesh<2>::build_unchecked({{0, 0}, {1, 0}, {2, 0}}, {{0, 1, 2}});
  EXPECT_EQ(cell_quality(m, 0), 0.0);
}

TEST(CellQuality, InvertedIsZero) {
  auto m = Mesh<2>::build_unchecked({{0, 0}, {0, 1}, {1, 0}}, {{0, 1, 2}});
  EXPECT_LT(cell_volume(m, 0), 0.0);
  EXPECT_EQ(cell_quality(m, 0), 0.0);
}

TEST(CellQuality, RightIsoscelesMatchesRadiusRatio) {
  const double c = std::sqrt(2.0);
  const double r_in = (1.0 + 1.0 - c) / 2.0;
  const double r_circ = c / 2.0;
  EXPECT_NEAR(cell_quality(one_triangle(), 0), 2.0 * r_in / r_circ, 1e-14);
  EXPECT_NEAR(cell_quality(one_triangle(), 0), 0.8284271247461902, 1e-12);
}

TEST(CellQuality, InvariantUnderRigidMotionAndScaling) {
  const Point<2> a{0.1, 0.2}, b{1.3, 0.4}, c{0.5, 1.7};
  const double q = cell_quality(one_triangle(a, b, c), 0);
  const double th = 0.7, s = 3.5e-4;
  auto tf = [&](Point<2> p) {
    return Point<2>{s * (std::cos(th) * p[0] - std::sin(th) * p[1]) + 2.0,
                    s * (std::sin(th) * p[0] + std::cos(th) * p[1]) - 1.0};
  };
  EXPECT_NEAR(cell_quality(one_triangle(tf(a), tf(b), tf(c)), 0), q, 1e-12);
}

TEST(MinQuality, EquilateralStrip) {
  const double h = std::sqrt(3.0) / 2;
  auto m = Mesh<2>::build({{0, 0}, {1, 0}, {0.5, h}, {1.5, h}}, {{0, 1, 2}, {1, 3, 2}},
                          {{{0, 1}, BoundaryTag::CylWall},
                           {{1, 3}, BoundaryTag::Outlet},
                           {{3, 2}, BoundaryTag::CylWall},
                           {{2, 0}, BoundaryTag::Inlet}});
  EXPECT_NEAR(min_quality(m), 1.0, 1e-14);
}

TEST(MinQuality, DegenerateCellDominates) {
  auto m = Mesh<2>::build_unchecked({{0, 0}, {1, 0}, {0, 1}, {2, 0}}, {{0, 1, 2}, {0, 1, 3}});
  EXPECT_EQ(min_quality(m), 0.0);
}

TEST(MinQuality, CrissCrossSquare) {
  auto m = unit_square(4, DiagonalPattern::CrissCross);
  EXPECT_NEAR(min_quality(m), 0.8284271247461902, 1e-12);
  EXPECT_NEAR(mean_quality(m), 0.8284271247461902, 1e-12);
}

TEST(MinQuality, EmptyMeshThrows) {
  Mesh<2> m;
  EXPECT_THROW(min_quality(m), MeshError);
}

TEST(ApplyDisplacement, ZeroIsIdentity) {
  auto m = unit_square(3);
  const auto before = m.vertices();
  const auto out = apply_displacement(m, VectorField<2>(m.vertex_count(), Point<2>{}), 0.1);
  EXPECT_TRUE(out.accepted);
  EXPECT_EQ(m.vertices(), before);
}

TEST(ApplyDisplacement, RigidTranslationPreservesVolumeAndQuality) {
  auto m = unit_square(3);
  std::vector<double> vol, q;
  for (int c = 0; c < m.cell_count(); ++c) {
    vol.push_back(cell_volume(m, c));
    q.push_back(cell_quality(m, c));
  }
  const auto out = apply_displacement(m, VectorField<2>(m.vertex_count(), Point<2>{0.25, -0.5}), 0.1);
  ASSERT_TRUE(out.accepted);
  for (int c = 0; c < m.cell_count(); ++c) {
    EXPECT_NEAR(cell_volume(m, c), vol[c], 1e-14);
    EXPECT_NEAR(cell_quality(m, c), q[c], 1e-12);
  }
}

TEST(ApplyDisplacement, CrossingOppositeEdgeIsRejected) {
  auto m = one_triangle();
  const auto before = m.vertices();
  VectorField<2> d(3, Point<2>{});
  d[2] = {0.0, -2.0};  // (0,1) -> (0,-1), across edge (0,0)-(1,0)
  const auto out = apply_displacement(m, d, 0.0);
  EXPECT_FALSE(out.accepted);
  EXPECT_EQ(out.inverted_cells, 1);
  EXPECT_EQ(m.vertices(), before);
}

TEST(ApplyDisplacement, QualityFloorRejectsAndReports) {
  auto m = one_triangle();
  VectorField<2> d(3, Point<2>{});
  d[2] = {0.0, -0.95};
  const auto out = apply_displacement(m, d, 0.3);
  EXPECT_FALSE(out.accepted);
  EXPECT_EQ(out.inverted_cells, 0);
  EXPECT_LT(out.min_quality, 0.3);
  EXPECT_GT(out.min_quality, 0.0);
}

TEST(ApplyDisplacement, LengthMismatchAndNonFiniteThrow) {
  auto m = one_triangle();
  EXPECT_THROW(apply_displacement(m, VectorField<2>(2), 0.1), MeshError);
  VectorField<2> d(3, Point<2>{});
  d[1][0] = std::nan("");
  EXPECT_THROW(apply_displacement(m, d, 0.1), MeshError);
}

TEST(ApplyDisplacement, ReverseRestoresCoordinates) {
  auto m = make_channel_mesh(desk_channel());
  const auto before = m.vertices();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double h = 0.05 * mean_edge_length(m);
  VectorField<2> d(m.vertex_count());
  for (auto& p : d) p = {h * u(rng), h * u(rng)};
  ASSERT_TRUE(apply_displacement(m, d, 0.1).accepted);
  VectorField<2> back = d;
  for (auto& p : back) p = {-p[0], -p[1]};
  ASSERT_TRUE(apply_displacement(m, back, 0.1).accepted);
  double err = 0.0;
  for (int v = 0; v < m.vertex_count(); ++v)
    for (int a = 0; a < 2; ++a) err = std::max(err, std::abs(m.vertex(v)[a] - before[v][a]));
  EXPECT_LT(err, 1e-18);
}

TEST(MeshInvariants, RectangleVolumeAndSideMeasures) {
  RectSpec s;
  s.x0 = 0.3;
  s.x1 = 4.3e-3 + 0.3;
  s.y1 = 1.1e-3;
  s.nx = 17;
  s.ny = 5;
  auto m = rectangle_mesh(s);
  const double area = (s.x1 - s.x0) * s.y1;
  EXPECT_NEAR(total_volume(m), area, 1e-12 * area);
  EXPECT_NEAR(tagged_measure(m, BoundaryTag::Inlet), s.y1, 1e-12 * s.y1);
  EXPECT_NEAR(tagged_measure(m, BoundaryTag::Outlet), s.y1, 1e-12 * s.y1);
  EXPECT_NEAR(tagged_measure(m, BoundaryTag::CylWall), 2 * (s.x1 - s.x0), 1e-12 * (s.x1 - s.x0));
}

TEST(MeshInvariants, BoxVolume) {
  BoxSpec s;
  s.lo = {0.0, -1.0, 2.0};
  s.hi = {2.0, 0.5, 2.25};
  s.n = {3, 4, 2};
  auto m = box_mesh(s);
  EXPECT_NEAR(total_volume(m), 2.0 * 1.5 * 0.25, 1e-12 * 0.75);
  EXPECT_NEAR(tagged_measure(m, BoundaryTag::Inlet), 1.5 * 0.25, 1e-12);
  EXPECT_GT(min_quality(m), 0.0);
}

TEST(MeshInvariants, ChannelInletHeight) {
  auto spec = desk_channel();
  auto m = make_channel_mesh(spec);
  EXPECT_NEAR(tagged_measure(m, BoundaryTag::Inlet), spec.height, 1e-12 * spec.height);
  EXPECT_NEAR(tagged_measure(m, BoundaryTag::Outlet), spec.height, 1e-12 * spec.height);
  EXPECT_NEAR(tagged_measure(m, BoundaryTag::CylWall), 2 * spec.length, 1e-12 * spec.length);
}

TEST(MeshBuild, RejectsUntaggedBoundary) {
  EXPECT_THROW(Mesh<2>::build({{0, 0}, {1, 0}, {0, 1}}, {{0, 1, 2}},
                              {{{0, 1}, BoundaryTag::CylWall}, {{1, 2}, BoundaryTag::Outlet}}),
               MeshError);
}

TEST(MeshBuild, RejectsDoubleTagAndInteriorTag) {
  std::vector<Mesh<2>::TaggedFacet> f{{{0, 1}, BoundaryTag::CylWall},
                                      {{1, 2}, BoundaryTag::Outlet},
                                      {{2, 0}, BoundaryTag::Inlet},
                                      {{1, 0}, BoundaryTag::Packing}};
  EXPECT_THROW(Mesh<2>::build({{0, 0}, {1, 0}, {0, 1}}, {{0, 1, 2}}, f), MeshError);
  auto sq = unit_square(1);
  std::vector<Mesh<2>::TaggedFacet> g;
  for (const auto& bf : sq.boundary_facets()) g.push_back({bf.vertices, bf.tag});
  g.push_back({{0, 3}, BoundaryTag::Packing});  // the diagonal
  EXPECT_THROW(Mesh<2>::build(sq.vertices(), sq.cells(), g), MeshError);
}

TEST(MeshBuild, RejectsDegenerateCell) {
  EXPECT_THROW(Mesh<2>::build({{0, 0}, {1, 0}, {2, 0}}, {{0, 1, 2}},
                              {{{0, 1}, BoundaryTag::CylWall},
                               {{1, 2}, BoundaryTag::CylWall},
                               {{2, 0}, BoundaryTag::CylWall}}),
               MeshError);
}

TEST(MeshBuild, EveryBoundaryFacetHasOneCell) {
  auto m = cylinder_mesh(CylinderSpec{});
  for (const auto& f : m.boundary_facets()) {
    const auto& cell = m.cell(f.cell);
    int shared = 0;
    for (int v : f.vertices) shared += std::count(cell.begin(), cell.end(), v);
    EXPECT_EQ(shared, 3);
    EXPECT_EQ(std::count(f.vertices.begin(), f.vertices.end(), cell[f.opposite]), 0);
  }
  for (int c = 0; c < m.cell_count(); ++c) EXPECT_GT(cell_volume(m, c), 0.0);
}

TEST(BoundaryTags, CodesAreFixed) {
  EXPECT_EQ(tag_code(BoundaryTag::Inlet), 1);
  EXPECT_EQ(tag_code(BoundaryTag::Outlet), 2);
  EXPECT_EQ(tag_code(BoundaryTag::CylWall), 3);
  EXPECT_EQ(tag_code(BoundaryTag::PackingJacket), 4);
  EXPECT_EQ(tag_code(BoundaryTag::Packing), 5);
  EXPECT_FALSE(tag_from_code(0).has_value());
  EXPECT_FALSE(tag_from_code(7).has_value());
  EXPECT_EQ(*tag_from_code(5), BoundaryTag::Packing);
}
