#pragma once

#include <cmath>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "packopt/packopt.hpp"

namespace packopt::testing {

inline Mesh<2> one_triangle(Point<2> a = {0, 0}, Point<2> b = {1, 0}, Point<2> c = {0, 1}) {
  return Mesh<2>::build({a, b, c}, {{0, 1, 2}},
                        {{{0, 1}, BoundaryTag::CylWall},
                         {{1, 2}, BoundaryTag::Outlet},
                         {{2, 0}, BoundaryTag::Inlet}});
}

inline Mesh<3> one_tet() {
  return Mesh<3>::build({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, {{0, 1, 2, 3}},
                        {{{0, 1, 2}, BoundaryTag::Inlet},
                         {{0, 1, 3}, BoundaryTag::CylWall},
                         {{0, 2, 3}, BoundaryTag::CylWall},
                         {{1, 2, 3}, BoundaryTag::Outlet}});
}

inline Mesh<2> unit_square(int n, DiagonalPattern pattern = DiagonalPattern::Right) {
  RectSpec s;
  s.nx = s.ny = n;
  s.pattern = pattern;
  return rectangle_mesh(s);
}

/// Channel [0,L]x[0,H] with one square obstacle in the middle tagged Packing,
/// small enough for fast coupled solves.
inline Mesh<2> small_packed_channel(int nx = 16, int ny = 6, double length = 4e-3, double height = 1.5e-3) {
  RectSpec s;
  s.x1 = length;
  s.y1 = height;
  s.nx = nx;
  s.ny = ny;
  s.pattern = DiagonalPattern::Alternating;
  auto full = rectangle_mesh(s);
  // Remove a block of cells to create a hole, then tag its boundary Packing.
  const int i0 = nx / 2 - 1, i1 = nx / 2 + 1, j0 = ny / 2 - 1, j1 = ny / 2 + 1;
  auto in_hole = [&](const Mesh<2>::Cell& c) {
    double cx = 0.0, cy = 0.0;
    for (int v : c) {
      cx += full.vertex(v)[0] / 3.0;
      cy += full.vertex(v)[1] / 3.0;
    }
    const double dx = length / nx, dy = height / ny;
    return cx > i0 * dx && cx < i1 * dx && cy > j0 * dy && cy < j1 * dy;
  };
  std::vector<Mesh<2>::Cell> cells;
  for (const auto& c : full.cells())
    if (!in_hole(c)) cells.push_back(c);
  std::vector<Mesh<2>::TaggedFacet> facets;
  for (const auto& f : full.boundary_facets()) facets.push_back({f.vertices, f.tag});
  // Hole edges: edges of removed cells shared with kept cells.
  std::map<std::pair<int, int>, int> count;
  for (const auto& c : cells)
    for (int k = 0; k < 3; ++k) {
      int a = c[k], b = c[(k + 1) % 3];
      if (a > b) std::swap(a, b);
      ++count[{a, b}];
    }
  std::set<std::pair<int, int>> outer;
  for (const auto& f : full.boundary_facets())
    outer.insert({std::min(f.vertices[0], f.vertices[1]), std::max(f.vertices[0], f.vertices[1])});
  for (const auto& [e, n] : count)
    if (n == 1 && !outer.count(e)) facets.push_back({{e.first, e.second}, BoundaryTag::Packing});
  // Vertices strictly inside the hole belong to no cell; drop them.
  std::vector<int> map(full.vertex_count(), -1);
  std::vector<Point<2>> pts;
  for (auto& c : cells)
    for (int& v : c) {
      if (map[v] < 0) {
        map[v] = static_cast<int>(pts.size());
        pts.push_back(full.vertex(v));
      }
      v = map[v];
    }
  for (auto& f : facets)
    for (int& v : f.vertices) v = map[v];
  return Mesh<2>::build(std::move(pts), std::move(cells), std::move(facets));
}

/// Relative Frobenius-like distance of two vectors.
inline double rel_diff(const Vector& a, const Vector& b) {
  const double s = std::max(a.norm(), b.norm());
  return s > 0.0 ? (a - b).norm() / s : 0.0;
}

inline Vector random_vector(int n, unsigned seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

}  // namespace packopt::testing
