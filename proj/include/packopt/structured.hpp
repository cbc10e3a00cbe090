#pragma once

// Structured simplicial meshes of rectangles, boxes and a solid cylinder,
// used for verification cases.

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "packopt/error.hpp"
#include "packopt/mesh.hpp"

namespace packopt {

enum class DiagonalPattern { Right, Alternating, CrissCross };

/// Tags of the four sides of a rectangle.
struct RectTags {
  BoundaryTag left = BoundaryTag::Inlet;
  BoundaryTag right = BoundaryTag::Outlet;
  BoundaryTag bottom = BoundaryTag::CylWall;
  BoundaryTag top = BoundaryTag::CylWall;
};

struct RectSpec {
  double x0 = 0.0, x1 = 1.0;
  double y0 = 0.0, y1 = 1.0;
  int nx = 4, ny = 4;
  DiagonalPattern pattern = DiagonalPattern::Right;
  RectTags tags;
};

inline Mesh<2> rectangle_mesh(const RectSpec& s) {
  if (s.nx < 1 || s.ny < 1 || !(s.x1 > s.x0) || !(s.y1 > s.y0))
    throw MeshError("rectangle_mesh: invalid extents or resolution");
  std::vector<Point<2>> pts;
  auto grid = [&](int i, int j) { return j * (s.nx + 1) + i; };
  for (int j = 0; j <= s.ny; ++j)
    for (int i = 0; i <= s.nx; ++i) {
      // End points are assigned exactly so side coordinates carry no rounding.
      const double x = i == s.nx ? s.x1 : s.x0 + (s.x1 - s.x0) * i / s.nx;
      const double y = j == s.ny ? s.y1 : s.y0 + (s.y1 - s.y0) * j / s.ny;
      pts.push_back({x, y});
    }
  std::vector<Mesh<2>::Cell> cells;
  for (int j = 0; j < s.ny; ++j)
    for (int i = 0; i < s.nx; ++i) {
      const int a = grid(i, j), b = grid(i + 1, j), c = grid(i + 1, j + 1), d = grid(i, j + 1);
      if (s.pattern == DiagonalPattern::CrissCross) {
        const int m = static_cast<int>(pts.size());
        pts.push_back({0.5 * (pts[a][0] + pts[c][0]), 0.5 * (pts[a][1] + pts[c][1])});
        cells.push_back({a, b, m});
        cells.push_back({b, c, m});
        cells.push_back({c, d, m});
        cells.push_back({d, a, m});
      } else if (s.pattern == DiagonalPattern::Alternating && (i + j) % 2 == 1) {
        cells.push_back({a, b, d});
        cells.push_back({b, c, d});
      } else {
        cells.push_back({a, b, c});
        cells.push_back({a, c, d});
      }
    }
  std::vector<Mesh<2>::TaggedFacet> facets;
  for (int i = 0; i < s.nx; ++i) {
    facets.push_back({{grid(i, 0), grid(i + 1, 0)}, s.tags.bottom});
    facets.push_back({{grid(i, s.ny), grid(i + 1, s.ny)}, s.tags.top});
  }
  for (int j = 0; j < s.ny; ++j) {
    facets.push_back({{grid(0, j), grid(0, j + 1)}, s.tags.left});
    facets.push_back({{grid(s.nx, j), grid(s.nx, j + 1)}, s.tags.right});
  }
  return Mesh<2>::build(std::move(pts), std::move(cells), std::move(facets));
}

/// Tags of the six faces of a box: x-, x+, y-, y+, z-, z+.
struct BoxSpec {
  std::array<double, 3> lo{0.0, 0.0, 0.0};
  std::array<double, 3> hi{1.0, 1.0, 1.0};
  std::array<int, 3> n{2, 2, 2};
  std::array<BoundaryTag, 6> tags{BoundaryTag::Inlet,   BoundaryTag::Outlet,  BoundaryTag::CylWall,
                                  BoundaryTag::CylWall, BoundaryTag::CylWall, BoundaryTag::CylWall};
};

/// Each hexahedron is split into six tetrahedra around its main diagonal.
inline Mesh<3> box_mesh(const BoxSpec& s) {
  for (int a = 0; a < 3; ++a)
    if (s.n[a] < 1 || !(s.hi[a] > s.lo[a])) throw MeshError("box_mesh: invalid extents or resolution");
  const int nx = s.n[0], ny = s.n[1], nz = s.n[2];
  auto id = [&](int i, int j, int k) { return (k * (ny + 1) + j) * (nx + 1) + i; };
  std::vector<Point<3>> pts;
  for (int k = 0; k <= nz; ++k)
    for (int j = 0; j <= ny; ++j)
      for (int i = 0; i <= nx; ++i) {
        const std::array<int, 3> ijk{i, j, k};
        Point<3> p;
        for (int a = 0; a < 3; ++a)
          p[a] = ijk[a] == s.n[a] ? s.hi[a] : s.lo[a] + (s.hi[a] - s.lo[a]) * ijk[a] / s.n[a];
        pts.push_back(p);
      }
  // Kuhn subdivision: paths from corner 0 to corner 7 through the unit cube.
  static constexpr std::array<std::array<int, 3>, 6> kPerm{
      {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  std::vector<Mesh<3>::Cell> cells;
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i)
        for (const auto& p : kPerm) {
          std::array<int, 3> c{i, j, k};
          Mesh<3>::Cell cell;
          cell[0] = id(c[0], c[1], c[2]);
          for (int s2 = 0; s2 < 3; ++s2) {
            ++c[p[s2]];
            cell[s2 + 1] = id(c[0], c[1], c[2]);
          }
          cells.push_back(cell);
        }
  std::vector<Mesh<3>::TaggedFacet> facets;
  auto quad = [&](int a, int b, int c, int d, BoundaryTag t) {
    // Diagonal a-c matches the Kuhn split (it joins the lowest and highest corners).
    facets.push_back({{a, b, c}, t});
    facets.push_back({{a, c, d}, t});
  };
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j) {
      quad(id(0, j, k), id(0, j + 1, k), id(0, j + 1, k + 1), id(0, j, k + 1), s.tags[0]);
      quad(id(nx, j, k), id(nx, j + 1, k), id(nx, j + 1, k + 1), id(nx, j, k + 1), s.tags[1]);
    }
  for (int k = 0; k < nz; ++k)
    for (int i = 0; i < nx; ++i) {
      quad(id(i, 0, k), id(i + 1, 0, k), id(i + 1, 0, k + 1), id(i, 0, k + 1), s.tags[2]);
      quad(id(i, ny, k), id(i + 1, ny, k), id(i + 1, ny, k + 1), id(i, ny, k + 1), s.tags[3]);
    }
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      quad(id(i, j, 0), id(i + 1, j, 0), id(i + 1, j + 1, 0), id(i, j + 1, 0), s.tags[4]);
      quad(id(i, j, nz), id(i + 1, j, nz), id(i + 1, j + 1, nz), id(i, j + 1, nz), s.tags[5]);
    }
  return Mesh<3>::build(std::move(pts), std::move(cells), std::move(facets));
}

struct CylinderSpec {
  double radius = 1.0;
  double height = 1.0;
  int rings = 3;       // radial layers
  int segments = 24;   // points on the outer circle
  int layers = 4;      // axial layers
  BoundaryTag bottom = BoundaryTag::Inlet;
  BoundaryTag top = BoundaryTag::Outlet;
  BoundaryTag side = BoundaryTag::PackingJacket;
};

/// Solid cylinder around the z axis: a ring-structured disk extruded into
/// prisms, each split into three tetrahedra with index-ordered diagonals.
inline Mesh<3> cylinder_mesh(const CylinderSpec& s) {
  if (s.rings < 1 || s.segments < 6 || s.layers < 1 || !(s.radius > 0.0) || !(s.height > 0.0))
    throw MeshError("cylinder_mesh: invalid parameters");
  // Disk: ring k has k * segments / rings points (at least 6), center point 0.
  std::vector<std::array<double, 2>> disk{{0.0, 0.0}};
  std::vector<std::vector<int>> ring_ids{{0}};
  for (int k = 1; k <= s.rings; ++k) {
    const int m = k == s.rings ? s.segments : std::max(6, k * s.segments / s.rings);
    std::vector<int> ids;
    for (int q = 0; q < m; ++q) {
      const double th = 2.0 * std::numbers::pi * q / m;
      const double r = s.radius * k / s.rings;
      ids.push_back(static_cast<int>(disk.size()));
      disk.push_back({r * std::cos(th), r * std::sin(th)});
    }
    ring_ids.push_back(ids);
  }
  // Triangulate between consecutive rings by advancing along the angle.
  std::vector<std::array<int, 3>> tris;
  for (int k = 0; k < s.rings; ++k) {
    const auto& in = ring_ids[k];
    const auto& out = ring_ids[k + 1];
    if (in.size() == 1) {
      for (std::size_t q = 0; q < out.size(); ++q)
        tris.push_back({in[0], out[q], out[(q + 1) % out.size()]});
      continue;
    }
    std::size_t a = 0, b = 0;
    const std::size_t na = in.size(), nb = out.size();
    while (a < na || b < nb) {
      const double ta = static_cast<double>(a + 1) / na, tb = static_cast<double>(b + 1) / nb;
      if (b < nb && (a >= na || tb <= ta)) {
        tris.push_back({in[a % na], out[b % nb], out[(b + 1) % nb]});
        ++b;
      } else {
        tris.push_back({in[a % na], out[b % nb], in[(a + 1) % na]});
        ++a;
      }
    }
  }
  const int nd = static_cast<int>(disk.size());
  std::vector<Point<3>> pts;
  for (int l = 0; l <= s.layers; ++l) {
    const double z = l == s.layers ? s.height : s.height * l / s.layers;
    for (const auto& p : disk) pts.push_back({p[0], p[1], z});
  }
  std::vector<Mesh<3>::Cell> cells;
  std::vector<Mesh<3>::TaggedFacet> facets;
  for (int l = 0; l < s.layers; ++l)
    for (const auto& t : tris) {
      std::array<int, 3> b{t[0] + l * nd, t[1] + l * nd, t[2] + l * nd};
      std::sort(b.begin(), b.end());
      const int i = b[0], j = b[1], k = b[2];
      const int it = i + nd, jt = j + nd, kt = k + nd;
      cells.push_back({i, j, k, kt});
      cells.push_back({i, j, jt, kt});
      cells.push_back({i, it, jt, kt});
    }
  for (const auto& t : tris) {
    facets.push_back({{t[0], t[1], t[2]}, s.bottom});
    facets.push_back({{t[0] + s.layers * nd, t[1] + s.layers * nd, t[2] + s.layers * nd}, s.top});
  }
  const auto& outer = ring_ids.back();
  for (int l = 0; l < s.layers; ++l)
    for (std::size_t q = 0; q < outer.size(); ++q) {
      int a = outer[q] + l * nd, b = outer[(q + 1) % outer.size()] + l * nd;
      if (a > b) std::swap(a, b);
      // Diagonal from the lower-index bottom vertex to the higher-index top vertex.
      facets.push_back({{a, b, b + nd}, s.side});
      facets.push_back({{a, a + nd, b + nd}, s.side});
    }
  return Mesh<3>::build(std::move(pts), std::move(cells), std::move(facets));
}

}  // namespace packopt
