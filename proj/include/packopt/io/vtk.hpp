#pragma once

// Legacy VTK ASCII unstructured grid with point data.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "packopt/error.hpp"
#include "packopt/fem.hpp"
#include "packopt/io/atomic_file.hpp"
#include "packopt/mesh.hpp"

namespace packopt::io {

template <int Dim>
struct VtkFields {
  std::vector<std::pair<std::string, const VectorField<Dim>*>> vectors;
  std::vector<std::pair<std::string, const Vector*>> scalars;
};

template <int Dim>
std::string format_vtk(const Mesh<Dim>& mesh, const VtkFields<Dim>& fields,
                       const std::string& title = "packopt") {
  const int nv = mesh.vertex_count();
  for (const auto& [name, f] : fields.vectors)
    if (static_cast<int>(f->size()) != nv)
      throw IoError("vtk: vector field '" + name + "' does not match the vertex count");
  for (const auto& [name, f] : fields.scalars)
    if (static_cast<int>(f->size()) != nv)
      throw IoError("vtk: scalar field '" + name + "' does not match the vertex count");

  std::string out = "# vtk DataFile Version 3.0\n" + title + "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  char buf[160];
  out += "POINTS " + std::to_string(nv) + " double\n";
  for (const auto& p : mesh.vertices()) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", p[0], p[1], Dim == 3 ? p[Dim - 1] : 0.0);
    out += buf;
  }
  const int nc = mesh.cell_count();
  out += "CELLS " + std::to_string(nc) + " " + std::to_string(nc * (Dim + 2)) + "\n";
  for (const auto& c : mesh.cells()) {
    out += std::to_string(Dim + 1);
    for (int v : c) out += " " + std::to_string(v);
    out += "\n";
  }
  out += "CELL_TYPES " + std::to_string(nc) + "\n";
  const std::string type = Dim == 2 ? "5\n" : "10\n";
  for (int c = 0; c < nc; ++c) out += type;
  if (fields.vectors.empty() && fields.scalars.empty()) return out;
  out += "POINT_DATA " + std::to_string(nv) + "\n";
  for (const auto& [name, f] : fields.vectors) {
    out += "VECTORS " + name + " double\n";
    for (const auto& u : *f) {
      std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", u[0], u[1], Dim == 3 ? u[Dim - 1] : 0.0);
      out += buf;
    }
  }
  for (const auto& [name, f] : fields.scalars) {
    out += "SCALARS " + name + " double 1\nLOOKUP_TABLE default\n";
    for (int v = 0; v < nv; ++v) {
      std::snprintf(buf, sizeof buf, "%.17g\n", (*f)[v]);
      out += buf;
    }
  }
  return out;
}

template <int Dim>
void write_vtk(const std::filesystem::path& path, const Mesh<Dim>& mesh,
               const VtkFields<Dim>& fields = {}) {
  write_atomic(path, format_vtk(mesh, fields));
}

}  // namespace packopt::io
