#pragma once

// Piecewise-linear Lagrange spaces, deterministic sparse assembly and
// Dirichlet constraints.

#include <Eigen/Sparse>

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "packopt/error.hpp"
#include "packopt/mesh.hpp"
#include "packopt/quadrature.hpp"

namespace packopt {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Vector = Eigen::VectorXd;

/// P1 space with `value_dim` components per vertex. Dofs are interleaved:
/// dof(v, c) = v * value_dim + c.
template <int Dim>
class FunctionSpace {
 public:
  FunctionSpace(const Mesh<Dim>& mesh, int value_dim) : mesh_(&mesh), value_dim_(value_dim) {
    if (value_dim < 1) throw Error("function space needs at least one component");
  }

  const Mesh<Dim>& mesh() const { return *mesh_; }
  int value_dim() const { return value_dim_; }
  int size() const { return mesh_->vertex_count() * value_dim_; }
  int dof(int vertex, int component) const { return vertex * value_dim_ + component; }

 private:
  const Mesh<Dim>* mesh_;
  int value_dim_;
};

// ---------------------------------------------------------------------------
// Parallel loop with thread-count independent results: work items write to
// disjoint per-cell slots, the caller reduces serially in cell order.

/// Assembly thread cap: PACKOPT_THREADS if set, else hardware concurrency.
inline int assembly_threads() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("PACKOPT_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n > 0 ? n : cap, cap);
  }
  return std::max(1, n);
}

template <class Fn>
void parallel_for(int count, Fn&& fn) {
  const int threads = std::min(assembly_threads(), std::max(1, count / 256));
  if (threads <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    const int begin = static_cast<int>(static_cast<long>(count) * t / threads);
    const int end = static_cast<int>(static_cast<long>(count) * (t + 1) / threads);
    pool.emplace_back([begin, end, &fn] {
      for (int i = begin; i < end; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

/// Assembles a global matrix from per-cell dense blocks. `kernel(cell, local)`
/// fills a row-major (n x n) block, n = (Dim+1) * value_dim, node-major local
/// ordering (node i, component a) -> i * value_dim + a.
template <int Dim, class Kernel>
SparseMatrix assemble_matrix(const FunctionSpace<Dim>& space, Kernel&& kernel) {
  const auto& mesh = space.mesh();
  const int vd = space.value_dim();
  const int n = (Dim + 1) * vd;
  const int nc = mesh.cell_count();
  std::vector<double> local(static_cast<std::size_t>(nc) * n * n, 0.0);
  parallel_for(nc, [&](int c) {
    kernel(c, std::span<double>(local.data() + static_cast<std::size_t>(c) * n * n, n * n));
  });
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(local.size());
  for (int c = 0; c < nc; ++c) {
    const auto& cell = mesh.cell(c);
    const double* block = local.data() + static_cast<std::size_t>(c) * n * n;
    for (int i = 0; i < n; ++i) {
      const int gi = space.dof(cell[i / vd], i % vd);
      for (int j = 0; j < n; ++j) {
        const int gj = space.dof(cell[j / vd], j % vd);
        triplets.emplace_back(gi, gj, block[i * n + j]);
      }
    }
  }
  SparseMatrix a(space.size(), space.size());
  a.setFromTriplets(triplets.begin(), triplets.end());
  return a;
}

/// Vector counterpart of assemble_matrix.
template <int Dim, class Kernel>
Vector assemble_vector(const FunctionSpace<Dim>& space, Kernel&& kernel) {
  const auto& mesh = space.mesh();
  const int vd = space.value_dim();
  const int n = (Dim + 1) * vd;
  const int nc = mesh.cell_count();
  std::vector<double> local(static_cast<std::size_t>(nc) * n, 0.0);
  parallel_for(nc, [&](int c) {
    kernel(c, std::span<double>(local.data() + static_cast<std::size_t>(c) * n, n));
  });
  Vector b = Vector::Zero(space.size());
  for (int c = 0; c < nc; ++c) {
    const auto& cell = mesh.cell(c);
    for (int i = 0; i < n; ++i)
      b[space.dof(cell[i / vd], i % vd)] += local[static_cast<std::size_t>(c) * n + i];
  }
  return b;
}

// ---------------------------------------------------------------------------
// Standard scalar forms

template <int Dim>
SparseMatrix mass_matrix(const FunctionSpace<Dim>& space) {
  if (space.value_dim() != 1) throw Error("mass_matrix expects a scalar space");
  const auto& mesh = space.mesh();
  return assemble_matrix(space, [&](int c, std::span<double> a) {
    const double vol = cell_volume(mesh, c);
    for (int i = 0; i <= Dim; ++i)
      for (int j = 0; j <= Dim; ++j) {
        double s = 0.0;
        for (const auto& q : simplex_rule<Dim>()) s += q.weight * q.bary[i] * q.bary[j];
        a[i * (Dim + 1) + j] = vol * s;
      }
  });
}

template <int Dim>
SparseMatrix stiffness_matrix(const FunctionSpace<Dim>& space) {
  if (space.value_dim() != 1) throw Error("stiffness_matrix expects a scalar space");
  const auto& mesh = space.mesh();
  return assemble_matrix(space, [&](int c, std::span<double> a) {
    const auto g = simplex_geometry<Dim, double>(mesh.cell_points(c));
    for (int i = 0; i <= Dim; ++i)
      for (int j = 0; j <= Dim; ++j) {
        double s = 0.0;
        for (int k = 0; k < Dim; ++k) s += g.grad[i][k] * g.grad[j][k];
        a[i * (Dim + 1) + j] = g.volume * s;
      }
  });
}

/// Load vector of f(x) integrated against the P1 basis.
template <int Dim>
Vector load_vector(const FunctionSpace<Dim>& space, const std::function<double(const Point<Dim>&)>& f) {
  if (space.value_dim() != 1) throw Error("load_vector expects a scalar space");
  const auto& mesh = space.mesh();
  return assemble_vector(space, [&](int c, std::span<double> b) {
    const auto x = mesh.cell_points(c);
    const double vol = cell_volume(mesh, c);
    for (const auto& q : simplex_rule<Dim>()) {
      Point<Dim> p{};
      for (int i = 0; i <= Dim; ++i)
        for (int k = 0; k < Dim; ++k) p[k] += q.bary[i] * x[i][k];
      const double fv = f(p);
      for (int i = 0; i <= Dim; ++i) b[i] += vol * q.weight * fv * q.bary[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Dirichlet conditions

template <int Dim>
struct DirichletBC {
  std::vector<BoundaryTag> tags;
  std::vector<int> components;  // empty: all components
  std::function<double(const Point<Dim>&, int component)> value;

  static DirichletBC constant(std::vector<BoundaryTag> tags, double v,
                              std::vector<int> components = {}) {
    return {std::move(tags), std::move(components),
            [v](const Point<Dim>&, int) { return v; }};
  }
};

/// Sorted (dof, value) pairs. Later conditions override earlier ones on shared
/// vertices. Throws if none of a condition's tags occur on the mesh.
template <int Dim>
std::vector<std::pair<int, double>> dirichlet_dofs(const FunctionSpace<Dim>& space,
                                                   std::span<const DirichletBC<Dim>> bcs) {
  const auto& mesh = space.mesh();
  std::map<int, double> fixed;
  for (const auto& bc : bcs) {
    const bool present = std::any_of(bc.tags.begin(), bc.tags.end(),
                                     [&](BoundaryTag t) { return mesh.has_tag(t); });
    if (!present) {
      std::string names;
      for (auto t : bc.tags) names += " " + std::string(tag_name(t));
      throw MeshError("Dirichlet condition on tags absent from mesh:" + names);
    }
    std::vector<int> comps = bc.components;
    if (comps.empty())
      for (int k = 0; k < space.value_dim(); ++k) comps.push_back(k);
    const auto mark = vertices_on_tags(mesh, std::span<const BoundaryTag>(bc.tags));
    for (int v = 0; v < mesh.vertex_count(); ++v) {
      if (!mark[v]) continue;
      for (int k : comps) fixed[space.dof(v, k)] = bc.value(mesh.vertex(v), k);
    }
  }
  return {fixed.begin(), fixed.end()};
}

/// Row replacement with column elimination: constrained rows and columns
/// become identity, b takes the prescribed values, and the eliminated column
/// contributions move to the right-hand side. Symmetric A stays symmetric.
inline void apply_dirichlet(SparseMatrix& a, Vector& b,
                            const std::vector<std::pair<int, double>>& constrained) {
  std::vector<char> is_fixed(a.rows(), 0);
  Vector g = Vector::Zero(a.rows());
  for (const auto& [dof, v] : constrained) {
    is_fixed[dof] = 1;
    g[dof] = v;
  }
  a.makeCompressed();
  for (int col = 0; col < a.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(a, col); it; ++it) {
      const auto row = it.row();
      if (is_fixed[col]) {
        if (!is_fixed[row]) b[row] -= it.value() * g[col];
        it.valueRef() = row == col ? 1.0 : 0.0;
      } else if (is_fixed[row]) {
        it.valueRef() = 0.0;
      }
    }
  }
  for (const auto& [dof, v] : constrained) {
    if (a.coeff(dof, dof) != 1.0) a.coeffRef(dof, dof) = 1.0;
    b[dof] = v;
  }
  a.prune(0.0);
}

template <int Dim>
void apply_dirichlet(SparseMatrix& a, Vector& b, const FunctionSpace<Dim>& space,
                     std::span<const DirichletBC<Dim>> bcs) {
  apply_dirichlet(a, b, dirichlet_dofs(space, bcs));
}

}  // namespace packopt
