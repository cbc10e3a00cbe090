#pragma once

// Gmsh MSH 2.2 ASCII subset: nodes, lines, triangles and tetrahedra. The
// first element tag is the physical tag, which for boundary elements is the
// BoundaryTag code.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "packopt/error.hpp"
#include "packopt/io/atomic_file.hpp"
#include "packopt/mesh.hpp"

namespace packopt::io {

using AnyMesh = std::variant<Mesh<2>, Mesh<3>>;

namespace detail {

struct RawElement {
  int id;
  int type;
  int physical;
  std::vector<long> nodes;
};

inline int nodes_of_type(int type) {
  switch (type) {
    case 1: return 2;   // line
    case 2: return 3;   // triangle
    case 3: return 4;   // quadrangle
    case 4: return 4;   // tetrahedron
    case 15: return 1;  // point
    default: return -1;
  }
}

template <int Dim>
Mesh<Dim> assemble_msh(const std::vector<std::array<double, 3>>& coords,
                       const std::vector<RawElement>& elements) {
  std::vector<Point<Dim>> verts;
  verts.reserve(coords.size());
  for (const auto& c : coords) {
    Point<Dim> p;
    for (int a = 0; a < Dim; ++a) p[a] = c[a];
    verts.push_back(p);
  }
  const int cell_type = Dim == 2 ? 2 : 4;
  const int facet_type = Dim == 2 ? 1 : 2;
  std::vector<typename Mesh<Dim>::Cell> cells;
  std::vector<typename Mesh<Dim>::TaggedFacet> facets;
  for (const auto& e : elements) {
    if (e.type == cell_type) {
      typename Mesh<Dim>::Cell c;
      for (int i = 0; i <= Dim; ++i) c[i] = static_cast<int>(e.nodes[i]);
      cells.push_back(c);
    } else if (e.type == facet_type) {
      const auto tag = tag_from_code(e.physical);
      if (!tag)
        throw MeshError("boundary element " + std::to_string(e.id) + " has unrecognized tag " +
                        std::to_string(e.physical));
      typename Mesh<Dim>::FacetVertices f;
      for (int i = 0; i < Dim; ++i) f[i] = static_cast<int>(e.nodes[i]);
      facets.push_back({f, *tag});
    }
  }
  if (cells.empty()) throw MeshError("mesh file contains no cells");
  return Mesh<Dim>::build(std::move(verts), std::move(cells), std::move(facets));
}

}  // namespace detail

/// Parses MSH 2.2 ASCII text. Node ids may be arbitrary; they are remapped to
/// consecutive indices. The dimension is 3 if any tetrahedron is present.
inline AnyMesh parse_msh(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  auto expect = [&](const std::string& want) {
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      if (line != want) throw IoError("msh: expected " + want + ", found " + line);
      return;
    }
    throw IoError("msh: unexpected end of file, expected " + want);
  };
  expect("$MeshFormat");
  double version = 0.0;
  int file_type = -1, data_size = 0;
  if (!(in >> version >> file_type >> data_size)) throw IoError("msh: malformed $MeshFormat");
  if (version < 2.0 || version >= 3.0)
    throw IoError("msh: only version 2.2 ASCII is supported (found " + std::to_string(version) + ")");
  if (file_type != 0) throw IoError("msh: binary files are not supported");
  std::getline(in, line);
  expect("$EndMeshFormat");

  std::vector<std::array<double, 3>> coords;
  std::map<long, int> node_index;
  std::vector<detail::RawElement> elements;
  bool have_nodes = false, have_elements = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line == "$Nodes") {
      long n = 0;
      if (!(in >> n) || n < 0) throw IoError("msh: malformed node count");
      coords.reserve(n);
      for (long i = 0; i < n; ++i) {
        long id;
        std::array<double, 3> x;
        if (!(in >> id >> x[0] >> x[1] >> x[2])) throw IoError("msh: malformed node line");
        if (!node_index.emplace(id, static_cast<int>(coords.size())).second)
          throw IoError("msh: duplicate node id " + std::to_string(id));
        coords.push_back(x);
      }
      std::getline(in, line);
      expect("$EndNodes");
      have_nodes = true;
    } else if (line == "$Elements") {
      if (!have_nodes) throw IoError("msh: $Elements before $Nodes");
      long n = 0;
      if (!(in >> n) || n < 0) throw IoError("msh: malformed element count");
      for (long i = 0; i < n; ++i) {
        detail::RawElement e;
        int ntags = 0;
        if (!(in >> e.id >> e.type >> ntags) || ntags < 0) throw IoError("msh: malformed element line");
        std::vector<long> tags(ntags);
        for (auto& t : tags)
          if (!(in >> t)) throw IoError("msh: malformed element tags");
        e.physical = ntags > 0 ? static_cast<int>(tags[0]) : 0;
        if (e.type == 3) throw MeshError("msh: quadrilateral elements are not supported");
        const int nn = detail::nodes_of_type(e.type);
        if (nn < 0) throw MeshError("msh: unknown element type " + std::to_string(e.type));
        e.nodes.resize(nn);
        for (auto& v : e.nodes) {
          long id;
          if (!(in >> id)) throw IoError("msh: malformed element nodes");
          auto it = node_index.find(id);
          if (it == node_index.end())
            throw MeshError("msh: element " + std::to_string(e.id) + " references unknown node " +
                            std::to_string(id));
          v = it->second;
        }
        if (e.type != 15) elements.push_back(std::move(e));
      }
      std::getline(in, line);
      expect("$EndElements");
      have_elements = true;
    } else if (line.front() == '$') {
      // Skip unknown sections.
      const std::string end = "$End" + line.substr(1);
      while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line == end) break;
      }
    } else {
      throw IoError("msh: unexpected content: " + line);
    }
  }
  if (!have_nodes || !have_elements) throw IoError("msh: missing $Nodes or $Elements");
  const bool three_d = std::any_of(elements.begin(), elements.end(),
                                   [](const detail::RawElement& e) { return e.type == 4; });
  if (three_d) return detail::assemble_msh<3>(coords, elements);
  return detail::assemble_msh<2>(coords, elements);
}

inline AnyMesh read_msh(const std::filesystem::path& path) { return parse_msh(read_file(path)); }

template <int Dim>
std::string format_msh(const Mesh<Dim>& mesh) {
  std::string out = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n";
  char buf[128];
  out += std::to_string(mesh.vertex_count()) + "\n";
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    const auto& p = mesh.vertex(v);
    std::snprintf(buf, sizeof buf, "%d %.17g %.17g %.17g\n", v + 1, p[0], p[1], Dim == 3 ? p[Dim - 1] : 0.0);
    out += buf;
  }
  out += "$EndNodes\n$Elements\n";
  out += std::to_string(mesh.facet_count() + mesh.cell_count()) + "\n";
  int id = 1;
  for (const auto& f : mesh.boundary_facets()) {
    out += std::to_string(id++) + (Dim == 2 ? " 1 2 " : " 2 2 ") + std::to_string(tag_code(f.tag)) +
           " " + std::to_string(tag_code(f.tag));
    for (int v : f.vertices) out += " " + std::to_string(v + 1);
    out += "\n";
  }
  for (const auto& c : mesh.cells()) {
    out += std::to_string(id++) + (Dim == 2 ? " 2 2 0 1" : " 4 2 0 1");
    for (int v : c) out += " " + std::to_string(v + 1);
    out += "\n";
  }
  out += "$EndElements\n";
  return out;
}

template <int Dim>
void write_msh(const std::filesystem::path& path, const Mesh<Dim>& mesh) {
  write_atomic(path, format_msh(mesh));
}

}  // namespace packopt::io
