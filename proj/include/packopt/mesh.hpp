#pragma once

// Simplicial mesh with tagged boundary facets. The vertex coordinates are the
// shape variable; topology never changes after construction.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "packopt/error.hpp"
#include "packopt/simplex.hpp"

namespace packopt {

/// Boundary part identifiers. The integer codes are the physical tags used in
/// mesh files.
enum class BoundaryTag : int {
  Inlet = 1,
  Outlet = 2,
  CylWall = 3,
  PackingJacket = 4,
  Packing = 5,
};

inline constexpr std::array<BoundaryTag, 5> kAllTags{BoundaryTag::Inlet, BoundaryTag::Outlet,
                                                     BoundaryTag::CylWall,
                                                     BoundaryTag::PackingJacket,
                                                     BoundaryTag::Packing};

inline std::optional<BoundaryTag> tag_from_code(int code) {
  if (code >= 1 && code <= 5) return static_cast<BoundaryTag>(code);
  return std::nullopt;
}

inline int tag_code(BoundaryTag t) { return static_cast<int>(t); }

inline std::string_view tag_name(BoundaryTag t) {
  switch (t) {
    case BoundaryTag::Inlet: return "inlet";
    case BoundaryTag::Outlet: return "outlet";
    case BoundaryTag::CylWall: return "cyl_wall";
    case BoundaryTag::PackingJacket: return "packing_jacket";
    case BoundaryTag::Packing: return "packing";
  }
  return "unknown";
}

template <int Dim>
using Point = std::array<double, Dim>;

/// Keeps a parameter out of template argument deduction; Dim comes from the mesh.
template <class T>
using NoDeduce = std::type_identity_t<T>;

/// Per-vertex vector field (velocity samples, displacements, gradients).
template <int Dim>
using VectorField = std::vector<Point<Dim>>;

/// Per-vertex displacement; one entry per mesh vertex.
template <int Dim>
using VertexDisplacement = VectorField<Dim>;

template <int Dim>
class Mesh {
  static_assert(Dim == 2 || Dim == 3, "meshes are triangles or tetrahedra");

 public:
  using Cell = std::array<int, Dim + 1>;
  using FacetVertices = std::array<int, Dim>;

  struct TaggedFacet {
    FacetVertices vertices;
    BoundaryTag tag;
  };

  struct BoundaryFacet {
    FacetVertices vertices;
    BoundaryTag tag;
    int cell;      // the unique adjacent cell
    int opposite;  // local index (in `cell`) of the vertex not on the facet
  };

  Mesh() = default;

  /// Validating constructor: orients every cell positively, rejects degenerate
  /// cells, and requires the tagged facets to cover the boundary exactly once.
  static Mesh build(std::vector<Point<Dim>> vertices, std::vector<Cell> cells,
                    std::vector<TaggedFacet> facets) {
    Mesh m;
    m.vertices_ = std::move(vertices);
    m.cells_ = std::move(cells);
    m.check_indices();
    for (std::size_t c = 0; c < m.cells_.size(); ++c) {
      double det = simplex_det<Dim, double>(m.cell_points(static_cast<int>(c)));
      if (det < 0.0) {
        std::swap(m.cells_[c][0], m.cells_[c][1]);
        det = -det;
      }
      if (!(det > 0.0) || !std::isfinite(det))
        throw MeshError("cell " + std::to_string(c) + " is degenerate");
    }
    m.link_boundary(std::move(facets), true);
    m.build_vertex_cells();
    return m;
  }

  /// Keeps cells exactly as given (no orientation fix, degenerate cells
  /// allowed) and does not require boundary coverage. Intended for tests and
  /// diagnostics of broken meshes.
  static Mesh build_unchecked(std::vector<Point<Dim>> vertices, std::vector<Cell> cells,
                              std::vector<TaggedFacet> facets = {}) {
    Mesh m;
    m.vertices_ = std::move(vertices);
    m.cells_ = std::move(cells);
    m.check_indices();
    m.link_boundary(std::move(facets), false);
    m.build_vertex_cells();
    return m;
  }

  int vertex_count() const { return static_cast<int>(vertices_.size()); }
  int cell_count() const { return static_cast<int>(cells_.size()); }
  int facet_count() const { return static_cast<int>(facets_.size()); }

  const std::vector<Point<Dim>>& vertices() const { return vertices_; }
  const std::vector<Cell>& cells() const { return cells_; }
  const std::vector<BoundaryFacet>& boundary_facets() const { return facets_; }
  const Point<Dim>& vertex(int v) const { return vertices_[v]; }
  const Cell& cell(int c) const { return cells_[c]; }
  const BoundaryFacet& facet(int f) const { return facets_[f]; }

  SimplexCoords<Dim, double> cell_points(int c) const {
    SimplexCoords<Dim, double> x;
    for (int i = 0; i <= Dim; ++i) x[i] = vertices_[cells_[c][i]];
    return x;
  }

  std::array<Point<Dim>, Dim> facet_points(int f) const {
    std::array<Point<Dim>, Dim> x;
    for (int i = 0; i < Dim; ++i) x[i] = vertices_[facets_[f].vertices[i]];
    return x;
  }

  const Point<Dim>& facet_opposite_point(int f) const {
    const auto& bf = facets_[f];
    return vertices_[cells_[bf.cell][bf.opposite]];
  }

  std::span<const int> vertex_cells(int v) const {
    return {vertex_cell_index_.data() + vertex_cell_offset_[v],
            vertex_cell_index_.data() + vertex_cell_offset_[v + 1]};
  }

  bool has_tag(BoundaryTag t) const {
    return std::any_of(facets_.begin(), facets_.end(),
                       [t](const BoundaryFacet& f) { return f.tag == t; });
  }

  /// Replaces all coordinates; topology is untouched. No validity checks.
  void set_vertices(std::vector<Point<Dim>> vertices) {
    if (vertices.size() != vertices_.size())
      throw MeshError("set_vertices: vertex count mismatch");
    vertices_ = std::move(vertices);
  }

 private:
  void check_indices() const {
    const int nv = vertex_count();
    for (const auto& c : cells_)
      for (int v : c)
        if (v < 0 || v >= nv) throw MeshError("cell references vertex out of range");
  }

  void link_boundary(std::vector<TaggedFacet> tagged, bool require_cover) {
    // Enumerate all cell faces; boundary faces occur exactly once.
    struct FaceRef {
      FacetVertices key;
      int cell;
      int opposite;
    };
    std::vector<FaceRef> faces;
    faces.reserve(cells_.size() * (Dim + 1));
    for (int c = 0; c < cell_count(); ++c) {
      for (int skip = 0; skip <= Dim; ++skip) {
        FacetVertices key;
        int k = 0;
        for (int i = 0; i <= Dim; ++i)
          if (i != skip) key[k++] = cells_[c][i];
        std::sort(key.begin(), key.end());
        faces.push_back({key, c, skip});
      }
    }
    std::sort(faces.begin(), faces.end(),
              [](const FaceRef& a, const FaceRef& b) { return a.key < b.key; });
    std::vector<FaceRef> boundary;
    for (std::size_t i = 0; i < faces.size();) {
      std::size_t j = i;
      while (j < faces.size() && faces[j].key == faces[i].key) ++j;
      if (j - i == 1) boundary.push_back(faces[i]);
      else if (j - i > 2) throw MeshError("non-manifold face shared by more than two cells");
      i = j;
    }

    std::vector<int> tag_count(boundary.size(), 0);
    facets_.clear();
    facets_.reserve(tagged.size());
    for (std::size_t t = 0; t < tagged.size(); ++t) {
      FacetVertices key = tagged[t].vertices;
      std::sort(key.begin(), key.end());
      auto it = std::lower_bound(boundary.begin(), boundary.end(), key,
                                 [](const FaceRef& a, const FacetVertices& k) { return a.key < k; });
      if (it == boundary.end() || it->key != key)
        throw MeshError("tagged facet " + std::to_string(t) + " is not a boundary facet");
      const auto idx = static_cast<std::size_t>(it - boundary.begin());
      if (++tag_count[idx] > 1)
        throw MeshError("boundary facet " + std::to_string(t) + " carries more than one tag");
      facets_.push_back({tagged[t].vertices, tagged[t].tag, it->cell, it->opposite});
    }
    if (require_cover) {
      for (std::size_t i = 0; i < boundary.size(); ++i)
        if (tag_count[i] == 0) {
          std::string verts;
          for (int v : boundary[i].key) verts += " " + std::to_string(v);
          throw MeshError("untagged boundary facet with vertices" + verts);
        }
    }
  }

  void build_vertex_cells() {
    const int nv = vertex_count();
    vertex_cell_offset_.assign(nv + 1, 0);
    for (const auto& c : cells_)
      for (int v : c) ++vertex_cell_offset_[v + 1];
    std::partial_sum(vertex_cell_offset_.begin(), vertex_cell_offset_.end(),
                     vertex_cell_offset_.begin());
    vertex_cell_index_.assign(vertex_cell_offset_[nv], 0);
    std::vector<int> fill(vertex_cell_offset_.begin(), vertex_cell_offset_.end() - 1);
    for (int c = 0; c < cell_count(); ++c)
      for (int v : cells_[c]) vertex_cell_index_[fill[v]++] = c;
  }

  std::vector<Point<Dim>> vertices_;
  std::vector<Cell> cells_;
  std::vector<BoundaryFacet> facets_;
  std::vector<int> vertex_cell_offset_;
  std::vector<int> vertex_cell_index_;
};

// ---------------------------------------------------------------------------
// Geometric queries

/// Signed volume (area in 2D) of a cell; positive for well-oriented cells.
template <int Dim>
double cell_volume(const Mesh<Dim>& mesh, int cell) {
  if (cell < 0 || cell >= mesh.cell_count()) throw MeshError("cell index out of range");
  return simplex_volume<Dim, double>(mesh.cell_points(cell));
}

template <int Dim>
double cell_diameter(const Mesh<Dim>& mesh, int cell) {
  return simplex_diameter<Dim, double>(mesh.cell_points(cell));
}

template <int Dim>
struct NormalArea {
  Point<Dim> normal;  // unit outward normal
  double measure;
};

/// Outward unit normal and measure of boundary facet `facet`.
template <int Dim>
NormalArea<Dim> facet_normal_area(const Mesh<Dim>& mesh, int facet) {
  if (facet < 0 || facet >= mesh.facet_count())
    throw MeshError("facet index " + std::to_string(facet) + " is not a boundary facet");
  const auto a = facet_area_vector<Dim, double>(mesh.facet_points(facet),
                                                mesh.facet_opposite_point(facet));
  double m = 0.0;
  for (double c : a) m += c * c;
  m = std::sqrt(m);
  NormalArea<Dim> out{};
  out.measure = m;
  for (int k = 0; k < Dim; ++k) out.normal[k] = m > 0.0 ? a[k] / m : 0.0;
  return out;
}

namespace detail {

template <int Dim>
double facet_measure_of(const std::array<Point<Dim>, Dim>& f) {
  if constexpr (Dim == 2) {
    return std::hypot(f[1][0] - f[0][0], f[1][1] - f[0][1]);
  } else {
    std::array<double, 3> e1, e2;
    for (int k = 0; k < 3; ++k) {
      e1[k] = f[1][k] - f[0][k];
      e2[k] = f[2][k] - f[0][k];
    }
    const double cx = e1[1] * e2[2] - e1[2] * e2[1];
    const double cy = e1[2] * e2[0] - e1[0] * e2[2];
    const double cz = e1[0] * e2[1] - e1[1] * e2[0];
    return 0.5 * std::sqrt(cx * cx + cy * cy + cz * cz);
  }
}

/// Circumradius from the edge-matrix system (x_i - x_0) . c = |x_i - x_0|^2 / 2.
template <int Dim>
double circumradius(const SimplexCoords<Dim, double>& x) {
  const auto g = simplex_geometry<Dim, double>(x);
  // Rows of e^{-1} are grad[1..Dim]; c = e^{-T} rhs.
  std::array<double, Dim> rhs;
  for (int k = 0; k < Dim; ++k) {
    double s = 0.0;
    for (int a = 0; a < Dim; ++a) s += (x[k + 1][a] - x[0][a]) * (x[k + 1][a] - x[0][a]);
    rhs[k] = 0.5 * s;
  }
  double r2 = 0.0;
  for (int a = 0; a < Dim; ++a) {
    double ca = 0.0;
    for (int k = 0; k < Dim; ++k) ca += g.grad[k + 1][a] * rhs[k];
    r2 += ca * ca;
  }
  return std::sqrt(r2);
}

}  // namespace detail

/// Dimension-scaled radius ratio Dim * r_in / r_circ in [0, 1]; 1 for the
/// regular simplex, 0 for degenerate or inverted cells.
template <int Dim>
double cell_quality(const Mesh<Dim>& mesh, int cell) {
  const auto x = mesh.cell_points(cell);
  const double vol = cell_volume(mesh, cell);
  if (!(vol > 0.0)) return 0.0;
  double surface = 0.0;
  for (int skip = 0; skip <= Dim; ++skip) {
    std::array<Point<Dim>, Dim> f;
    int k = 0;
    for (int i = 0; i <= Dim; ++i)
      if (i != skip) f[k++] = x[i];
    surface += detail::facet_measure_of<Dim>(f);
  }
  const double r_in = Dim * vol / surface;
  const double r_circ = detail::circumradius<Dim>(x);
  if (!(r_circ > 0.0) || !std::isfinite(r_circ)) return 0.0;
  return std::clamp(Dim * r_in / r_circ, 0.0, 1.0);
}

template <int Dim>
double min_quality(const Mesh<Dim>& mesh) {
  if (mesh.cell_count() == 0) throw MeshError("min_quality of an empty mesh");
  double q = std::numeric_limits<double>::infinity();
  for (int c = 0; c < mesh.cell_count(); ++c) q = std::min(q, cell_quality(mesh, c));
  return q;
}

template <int Dim>
double mean_quality(const Mesh<Dim>& mesh) {
  if (mesh.cell_count() == 0) throw MeshError("mean_quality of an empty mesh");
  double s = 0.0;
  for (int c = 0; c < mesh.cell_count(); ++c) s += cell_quality(mesh, c);
  return s / mesh.cell_count();
}

/// Sum of cell volumes.
template <int Dim>
double total_volume(const Mesh<Dim>& mesh) {
  double s = 0.0;
  for (int c = 0; c < mesh.cell_count(); ++c) s += cell_volume(mesh, c);
  return s;
}

template <int Dim>
double tagged_measure(const Mesh<Dim>& mesh, BoundaryTag tag) {
  double s = 0.0;
  for (int f = 0; f < mesh.facet_count(); ++f)
    if (mesh.facet(f).tag == tag) s += facet_normal_area(mesh, f).measure;
  return s;
}

template <int Dim>
double mean_edge_length(const Mesh<Dim>& mesh) {
  double s = 0.0;
  long n = 0;
  for (int c = 0; c < mesh.cell_count(); ++c) {
    const auto x = mesh.cell_points(c);
    for (int i = 0; i <= Dim; ++i)
      for (int j = i + 1; j <= Dim; ++j) {
        double d = 0.0;
        for (int a = 0; a < Dim; ++a) d += (x[j][a] - x[i][a]) * (x[j][a] - x[i][a]);
        s += std::sqrt(d);
        ++n;
      }
  }
  return n > 0 ? s / static_cast<double>(n) : 0.0;
}

/// Diagonal length of the axis-aligned bounding box.
template <int Dim>
double bounding_diameter(const Mesh<Dim>& mesh) {
  if (mesh.vertex_count() == 0) return 0.0;
  Point<Dim> lo = mesh.vertex(0), hi = mesh.vertex(0);
  for (const auto& p : mesh.vertices())
    for (int a = 0; a < Dim; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  double s = 0.0;
  for (int a = 0; a < Dim; ++a) s += (hi[a] - lo[a]) * (hi[a] - lo[a]);
  return std::sqrt(s);
}

/// Marks vertices lying on any facet whose tag is in `tags`.
template <int Dim>
std::vector<char> vertices_on_tags(const Mesh<Dim>& mesh, std::span<const BoundaryTag> tags) {
  std::vector<char> mark(mesh.vertex_count(), 0);
  for (const auto& f : mesh.boundary_facets())
    if (std::find(tags.begin(), tags.end(), f.tag) != tags.end())
      for (int v : f.vertices) mark[v] = 1;
  return mark;
}

// ---------------------------------------------------------------------------
// Vertex displacement

struct DisplacementOutcome {
  bool accepted = false;
  double min_quality = 0.0;  // quality of the candidate mesh
  int inverted_cells = 0;    // candidate cells with nonpositive volume
};

/// Moves every vertex by `d` if the displaced mesh has no inverted cell and
/// min_quality >= quality_floor; otherwise leaves `mesh` untouched.
template <int Dim>
DisplacementOutcome apply_displacement(Mesh<Dim>& mesh, const NoDeduce<VertexDisplacement<Dim>>& d,
                                       double quality_floor) {
  if (static_cast<int>(d.size()) != mesh.vertex_count())
    throw MeshError("displacement length " + std::to_string(d.size()) +
                    " does not match vertex count " + std::to_string(mesh.vertex_count()));
  for (const auto& v : d)
    for (double c : v)
      if (!std::isfinite(c)) throw MeshError("displacement has non-finite entries");

  const std::vector<Point<Dim>> original = mesh.vertices();
  std::vector<Point<Dim>> moved = original;
  for (std::size_t i = 0; i < moved.size(); ++i)
    for (int a = 0; a < Dim; ++a) moved[i][a] += d[i][a];
  mesh.set_vertices(std::move(moved));

  DisplacementOutcome out;
  double q = std::numeric_limits<double>::infinity();
  for (int c = 0; c < mesh.cell_count(); ++c) {
    if (!(cell_volume(mesh, c) > 0.0)) ++out.inverted_cells;
    q = std::min(q, cell_quality(mesh, c));
  }
  out.min_quality = mesh.cell_count() > 0 ? q : 0.0;
  out.accepted = out.inverted_cells == 0 && out.min_quality >= quality_floor;
  if (!out.accepted) mesh.set_vertices(original);
  return out;
}

}  // namespace packopt
