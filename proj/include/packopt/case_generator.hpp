#pragma once

// Built-in 2D desk geometry: a channel [0,L] x [0,H] with circular obstacles.
// Points are placed on the boundary at spacing h and on a hexagonal lattice
// inside, relaxed with edge springs, and triangulated as the Delaunay dual of
// a Voronoi diagram.

#include <boost/polygon/voronoi.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "packopt/error.hpp"
#include "packopt/mesh.hpp"

namespace packopt {

struct Obstacle {
  double x = 0.0;
  double y = 0.0;
  double r = 0.0;
};

struct ChannelSpec {
  double length = 8e-3;
  double height = 2e-3;
  double h = 8.4e-5;  // target edge length
  std::vector<Obstacle> obstacles;
  bool mirror = false;  // mesh the lower half and reflect it about y = H/2
  int smoothing_iterations = 40;
  double min_quality = 0.3;
};

/// Four obstacles, mirror-symmetric about the channel midline.
inline ChannelSpec desk_channel() {
  ChannelSpec s;
  s.obstacles = {{2.0e-3, 0.55e-3, 0.25e-3},
                 {2.0e-3, 1.45e-3, 0.25e-3},
                 {4.3e-3, 1.0e-3, 0.25e-3},
                 {6.3e-3, 1.0e-3, 0.25e-3}};
  return s;
}

inline int obstacle_segments(double r, double h) {
  return std::max(8, static_cast<int>(std::ceil(2.0 * std::numbers::pi * r / h)));
}

namespace detail {

using P2 = std::array<double, 2>;

inline double dist(const P2& a, const P2& b) { return std::hypot(a[0] - b[0], a[1] - b[1]); }

/// Delaunay triangles of `pts` (indices), from the dual of the Voronoi diagram
/// of integer-rounded coordinates. Cocircular groups are fan-triangulated.
inline std::vector<std::array<int, 3>> delaunay(const std::vector<P2>& pts, const P2& lo,
                                                double scale) {
  namespace bp = boost::polygon;
  std::vector<bp::point_data<std::int32_t>> ip;
  ip.reserve(pts.size());
  for (const auto& p : pts)
    ip.emplace_back(static_cast<std::int32_t>(std::llround((p[0] - lo[0]) * scale)),
                    static_cast<std::int32_t>(std::llround((p[1] - lo[1]) * scale)));
  bp::voronoi_diagram<double> vd;
  bp::construct_voronoi(ip.begin(), ip.end(), &vd);
  std::vector<std::array<int, 3>> tris;
  for (const auto& v : vd.vertices()) {
    std::vector<int> ring;
    const auto* e = v.incident_edge();
    do {
      ring.push_back(static_cast<int>(e->cell()->source_index()));
      e = e->rot_next();
    } while (e != v.incident_edge());
    for (std::size_t k = 1; k + 1 < ring.size(); ++k) tris.push_back({ring[0], ring[k], ring[k + 1]});
  }
  return tris;
}

inline bool inside_polygon(const P2& p, const std::vector<P2>& poly) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    if ((poly[i][1] > p[1]) != (poly[j][1] > p[1])) {
      const double x = poly[j][0] + (p[1] - poly[j][1]) * (poly[i][0] - poly[j][0]) /
                                        (poly[i][1] - poly[j][1]);
      if (p[0] < x) in = !in;
    }
  }
  return in;
}

struct ChannelBuilder {
  double x0, x1, y0, y1;  // meshed box (lower half when mirroring)
  double h;
  std::vector<Obstacle> obstacles;
  std::vector<std::vector<P2>> polygons;  // obstacle polygons
  std::vector<P2> pts;
  int n_fixed = 0;
  // Boundary segments (vertex pairs) with their tags; tag 0 marks the cut line.
  std::vector<std::pair<std::array<int, 2>, int>> segments;

  double sdf(const P2& p) const {
    double d = -std::min({p[0] - x0, x1 - p[0], p[1] - y0, y1 - p[1]});
    for (const auto& o : obstacles) d = std::max(d, o.r - std::hypot(p[0] - o.x, p[1] - o.y));
    return d;
  }

  bool in_domain(const P2& p) const {
    if (p[0] < x0 || p[0] > x1 || p[1] < y0 || p[1] > y1) return false;
    for (const auto& poly : polygons)
      if (inside_polygon(p, poly)) return false;
    return true;
  }

  int add_point(const P2& p) {
    pts.push_back(p);
    return static_cast<int>(pts.size()) - 1;
  }

  /// Points along a straight side, end points included once via `cache`.
  void add_side(const P2& a, const P2& b, int tag, std::map<std::pair<double, double>, int>& cache) {
    const int n = std::max(1, static_cast<int>(std::ceil(dist(a, b) / h - 0.2)));
    auto id = [&](const P2& p) {
      auto key = std::make_pair(p[0], p[1]);
      auto it = cache.find(key);
      if (it != cache.end()) return it->second;
      const int k = add_point(p);
      cache[key] = k;
      return k;
    };
    int prev = id(a);
    for (int i = 1; i <= n; ++i) {
      const P2 p = i == n ? b : P2{a[0] + (b[0] - a[0]) * i / n, a[1] + (b[1] - a[1]) * i / n};
      const int cur = id(p);
      segments.push_back({{prev, cur}, tag});
      prev = cur;
    }
  }

  void add_obstacle(const Obstacle& o, bool cut, double ymid) {
    const int n = obstacle_segments(o.r, h);
    const int m = cut ? n + (n % 2) : n;  // even count keeps the cut points on the midline
    std::vector<P2> poly;
    for (int q = 0; q < m; ++q) {
      const double th = 2.0 * std::numbers::pi * q / m;
      poly.push_back({o.x + o.r * std::cos(th), o.y + o.r * std::sin(th)});
    }
    if (cut) {
      poly[0][1] = ymid;
      poly[m / 2][1] = ymid;
    }
    polygons.push_back(poly);
    std::vector<int> ids;
    for (int q = 0; q < m; ++q) {
      const bool keep = !cut || poly[q][1] <= ymid;
      ids.push_back(keep ? add_point(poly[q]) : -1);
    }
    for (int q = 0; q < m; ++q) {
      const int a = ids[q], b = ids[(q + 1) % m];
      if (a >= 0 && b >= 0) segments.push_back({{a, b}, tag_code(BoundaryTag::Packing)});
    }
  }
};

}  // namespace detail

/// Generates the channel mesh. Left side Inlet, right side Outlet, top and
/// bottom CylWall, obstacle boundaries Packing.
inline Mesh<2> make_channel_mesh(const ChannelSpec& spec) {
  using detail::P2;
  const double L = spec.length, H = spec.height, h = spec.h;
  if (!(L > 0.0) || !(H > 0.0) || !(h > 0.0)) throw MeshError("channel: nonpositive dimensions");
  if (h > 0.25 * std::min(L, H)) throw MeshError("channel: resolution too coarse for the channel");
  const double ymid = 0.5 * H;

  for (std::size_t i = 0; i < spec.obstacles.size(); ++i) {
    const auto& o = spec.obstacles[i];
    if (!(o.r > 0.0)) throw MeshError("obstacle " + std::to_string(i) + " has nonpositive radius");
    const double gap = std::min({o.x - o.r, L - o.x - o.r, o.y - o.r, H - o.y - o.r});
    if (gap < 1.5 * h)
      throw MeshError("obstacle " + std::to_string(i) + " touches or lies too close to the channel walls");
    if (o.r < 1.5 * h)
      throw MeshError("resolution too coarse to resolve obstacle " + std::to_string(i));
    for (std::size_t j = 0; j < i; ++j) {
      const auto& p = spec.obstacles[j];
      const double d = std::hypot(o.x - p.x, o.y - p.y) - o.r - p.r;
      if (d < 0.0)
        throw MeshError("obstacles " + std::to_string(j) + " and " + std::to_string(i) + " overlap");
      if (d < 1.5 * h)
        throw MeshError("obstacles " + std::to_string(j) + " and " + std::to_string(i) +
                        " are closer than the resolution allows");
    }
  }

  detail::ChannelBuilder b;
  b.x0 = 0.0;
  b.x1 = L;
  b.y0 = 0.0;
  b.y1 = spec.mirror ? ymid : H;
  b.h = h;
  if (spec.mirror) {
    for (const auto& o : spec.obstacles) {
      const bool on_line = std::abs(o.y - ymid) < 1e-12 * H;
      if (!on_line && o.y + o.r > ymid && o.y - o.r < ymid)
        throw MeshError("mirror: obstacles must be centered on the midline or avoid it");
      bool has_twin = on_line;
      for (const auto& p : spec.obstacles)
        if (std::abs(p.x - o.x) < 1e-12 * L && std::abs(p.y - (H - o.y)) < 1e-12 * H && p.r == o.r)
          has_twin = true;
      if (!has_twin) throw MeshError("mirror: obstacle layout is not symmetric about y = H/2");
      if (o.y <= ymid) b.obstacles.push_back(o);
    }
  } else {
    b.obstacles = spec.obstacles;
  }

  std::map<std::pair<double, double>, int> cache;
  const int inlet = tag_code(BoundaryTag::Inlet), outlet = tag_code(BoundaryTag::Outlet);
  const int wall = tag_code(BoundaryTag::CylWall);
  b.add_side({0.0, 0.0}, {L, 0.0}, wall, cache);
  b.add_side({L, 0.0}, {L, b.y1}, outlet, cache);
  b.add_side({0.0, 0.0}, {0.0, b.y1}, inlet, cache);
  if (spec.mirror) {
    // The cut line is split at obstacles sitting on it.
    std::vector<std::pair<double, double>> gaps;
    for (const auto& o : b.obstacles)
      if (std::abs(o.y - ymid) < 1e-12 * H) gaps.push_back({o.x - o.r, o.x + o.r});
    std::sort(gaps.begin(), gaps.end());
    double xs = 0.0;
    for (const auto& g : gaps) {
      b.add_side({xs, ymid}, {g.first, ymid}, 0, cache);
      xs = g.second;
    }
    b.add_side({xs, ymid}, {L, ymid}, 0, cache);
  } else {
    b.add_side({0.0, H}, {L, H}, wall, cache);
  }
  for (const auto& o : b.obstacles) {
    const bool cut = spec.mirror && std::abs(o.y - ymid) < 1e-12 * H;
    if (cut) {
      // Reuse the cut-line end points created above.
      const int n0 = static_cast<int>(b.pts.size());
      b.add_obstacle(o, true, ymid);
      for (int k = n0; k < static_cast<int>(b.pts.size()); ++k) {
        auto key = std::make_pair(b.pts[k][0], b.pts[k][1]);
        auto it = cache.find(key);
        if (it == cache.end()) continue;
        for (auto& s : b.segments)
          for (int& v : s.first)
            if (v == k) v = it->second;
        b.pts[k] = {std::nan(""), std::nan("")};
      }
    } else {
      b.add_obstacle(o, false, ymid);
    }
  }
  // Compact away the duplicates replaced above.
  {
    std::vector<int> remap(b.pts.size(), -1);
    std::vector<P2> kept;
    for (std::size_t i = 0; i < b.pts.size(); ++i)
      if (!std::isnan(b.pts[i][0])) {
        remap[i] = static_cast<int>(kept.size());
        kept.push_back(b.pts[i]);
      }
    b.pts = std::move(kept);
    for (auto& s : b.segments)
      for (int& v : s.first) v = remap[v];
  }
  b.n_fixed = static_cast<int>(b.pts.size());

  // Hexagonal lattice inside.
  const double dy = h * std::sqrt(3.0) / 2.0;
  int row = 0;
  for (double y = b.y0 + dy; y < b.y1 - 0.4 * h; y += dy, ++row)
    for (double x = b.x0 + (row % 2 ? 0.5 * h : h); x < b.x1 - 0.4 * h; x += h) {
      const P2 p{x, y};
      if (b.sdf(p) < -0.55 * h) b.add_point(p);
    }

  const P2 lo{b.x0 - h, b.y0 - h};
  const double scale = static_cast<double>(1 << 29) / (std::max(L, H) + 2.0 * h);
  auto triangulate = [&] {
    auto tris = detail::delaunay(b.pts, lo, scale);
    std::vector<std::array<int, 3>> keep;
    for (const auto& t : tris) {
      const P2 c{(b.pts[t[0]][0] + b.pts[t[1]][0] + b.pts[t[2]][0]) / 3.0,
                 (b.pts[t[0]][1] + b.pts[t[1]][1] + b.pts[t[2]][1]) / 3.0};
      if (b.in_domain(c)) keep.push_back(t);
    }
    return keep;
  };

  // Spring relaxation of the interior points (repulsive-only edge forces).
  for (int it = 0; it < spec.smoothing_iterations; ++it) {
    const auto tris = triangulate();
    std::vector<P2> force(b.pts.size(), P2{0.0, 0.0});
    const double l0 = 1.2 * h;
    for (const auto& t : tris)
      for (int e = 0; e < 3; ++e) {
        const int i = t[e], j = t[(e + 1) % 3];
        const double l = detail::dist(b.pts[i], b.pts[j]);
        if (!(l > 0.0) || l >= l0) continue;
        const double f = (l0 - l) / l * 0.5;  // each edge is seen from both triangles
        for (int a = 0; a < 2; ++a) {
          const double d = f * (b.pts[i][a] - b.pts[j][a]);
          force[i][a] += d;
          force[j][a] -= d;
        }
      }
    for (int i = b.n_fixed; i < static_cast<int>(b.pts.size()); ++i) {
      P2 p{b.pts[i][0] + 0.2 * force[i][0], b.pts[i][1] + 0.2 * force[i][1]};
      // Keep interior points off the boundary: project back along the sdf gradient.
      for (int k = 0; k < 3; ++k) {
        const double d = b.sdf(p);
        if (d <= -0.4 * h) break;
        const double e = 1e-3 * h;
        const double gx = (b.sdf({p[0] + e, p[1]}) - b.sdf({p[0] - e, p[1]})) / (2 * e);
        const double gy = (b.sdf({p[0], p[1] + e}) - b.sdf({p[0], p[1] - e})) / (2 * e);
        const double g2 = gx * gx + gy * gy;
        if (!(g2 > 0.0)) break;
        p[0] -= (d + 0.4 * h) * gx / g2;
        p[1] -= (d + 0.4 * h) * gy / g2;
      }
      b.pts[i] = p;
    }
  }
  auto tris = triangulate();

  // Boundary conformity: every boundary segment must be a triangle edge.
  std::map<std::pair<int, int>, int> edge_use;
  for (const auto& t : tris)
    for (int e = 0; e < 3; ++e) {
      const int i = t[e], j = t[(e + 1) % 3];
      ++edge_use[{std::min(i, j), std::max(i, j)}];
    }
  for (const auto& [seg, tag] : b.segments) {
    const auto key = std::make_pair(std::min(seg[0], seg[1]), std::max(seg[0], seg[1]));
    auto it = edge_use.find(key);
    if (it == edge_use.end() || it->second != 1)
      throw MeshError("channel: triangulation does not conform to the boundary (resolution too coarse)");
  }

  std::vector<Point<2>> verts(b.pts.begin(), b.pts.end());
  std::vector<Mesh<2>::Cell> cells;
  for (const auto& t : tris) cells.push_back({t[0], t[1], t[2]});
  std::vector<Mesh<2>::TaggedFacet> facets;
  for (const auto& [seg, tag] : b.segments)
    if (tag != 0) facets.push_back({{seg[0], seg[1]}, static_cast<BoundaryTag>(tag)});

  if (spec.mirror) {
    // Reflect about y = H/2; cut-line vertices are shared.
    const int nv = static_cast<int>(verts.size());
    std::vector<int> twin(nv);
    for (int v = 0; v < nv; ++v) {
      if (verts[v][1] == ymid) {
        twin[v] = v;
      } else {
        twin[v] = static_cast<int>(verts.size());
        verts.push_back({verts[v][0], H - verts[v][1]});
      }
    }
    const std::size_t nc = cells.size();
    for (std::size_t c = 0; c < nc; ++c)
      cells.push_back({twin[cells[c][0]], twin[cells[c][2]], twin[cells[c][1]]});
    const std::size_t nf = facets.size();
    for (std::size_t f = 0; f < nf; ++f)
      facets.push_back({{twin[facets[f].vertices[0]], twin[facets[f].vertices[1]]}, facets[f].tag});
  }

  Mesh<2> mesh = Mesh<2>::build(std::move(verts), std::move(cells), std::move(facets));
  const double q = min_quality(mesh);
  if (q < spec.min_quality)
    throw MeshError("channel: minimum quality " + std::to_string(q) + " below " +
                    std::to_string(spec.min_quality) + " (resolution too coarse)");
  return mesh;
}

}  // namespace packopt
