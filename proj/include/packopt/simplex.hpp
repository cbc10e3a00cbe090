#pragma once

// Geometry of a single linear simplex, generic over the scalar type so the
// same code serves plain evaluation and coordinate differentiation.

#include <array>
#include <cmath>

#include "packopt/autodiff.hpp"

namespace packopt {

template <int Dim, class T>
using SimplexCoords = std::array<std::array<T, Dim>, Dim + 1>;

template <int Dim, class T>
struct SimplexGeometry {
  T det;     // determinant of the edge matrix [x1-x0, ..., xd-x0]
  T volume;  // det / Dim!
  std::array<std::array<T, Dim>, Dim + 1> grad;  // gradients of barycentric coordinates
};

constexpr int factorial(int n) { return n <= 1 ? 1 : n * factorial(n - 1); }

template <int Dim, class T>
T simplex_det(const SimplexCoords<Dim, T>& x) {
  std::array<std::array<T, Dim>, Dim> e;  // e[a][k] = x[k+1][a] - x[0][a]
  for (int a = 0; a < Dim; ++a)
    for (int k = 0; k < Dim; ++k) e[a][k] = x[k + 1][a] - x[0][a];
  if constexpr (Dim == 1) {
    return e[0][0];
  } else if constexpr (Dim == 2) {
    return e[0][0] * e[1][1] - e[0][1] * e[1][0];
  } else {
    return e[0][0] * (e[1][1] * e[2][2] - e[1][2] * e[2][1]) -
           e[0][1] * (e[1][0] * e[2][2] - e[1][2] * e[2][0]) +
           e[0][2] * (e[1][0] * e[2][1] - e[1][1] * e[2][0]);
  }
}

template <int Dim, class T>
T simplex_volume(const SimplexCoords<Dim, T>& x) {
  return simplex_det<Dim, T>(x) / static_cast<double>(factorial(Dim));
}

/// Requires a nondegenerate simplex (det != 0).
template <int Dim, class T>
SimplexGeometry<Dim, T> simplex_geometry(const SimplexCoords<Dim, T>& x) {
  static_assert(Dim == 2 || Dim == 3);
  std::array<std::array<T, Dim>, Dim> e;
  for (int a = 0; a < Dim; ++a)
    for (int k = 0; k < Dim; ++k) e[a][k] = x[k + 1][a] - x[0][a];

  SimplexGeometry<Dim, T> g;
  std::array<std::array<T, Dim>, Dim> inv;  // inv = e^{-1}
  if constexpr (Dim == 2) {
    g.det = e[0][0] * e[1][1] - e[0][1] * e[1][0];
    inv[0][0] = e[1][1] / g.det;
    inv[0][1] = -e[0][1] / g.det;
    inv[1][0] = -e[1][0] / g.det;
    inv[1][1] = e[0][0] / g.det;
  } else {
    const T c00 = e[1][1] * e[2][2] - e[1][2] * e[2][1];
    const T c01 = e[1][2] * e[2][0] - e[1][0] * e[2][2];
    const T c02 = e[1][0] * e[2][1] - e[1][1] * e[2][0];
    g.det = e[0][0] * c00 + e[0][1] * c01 + e[0][2] * c02;
    inv[0][0] = c00 / g.det;
    inv[1][0] = c01 / g.det;
    inv[2][0] = c02 / g.det;
    inv[0][1] = (e[0][2] * e[2][1] - e[0][1] * e[2][2]) / g.det;
    inv[1][1] = (e[0][0] * e[2][2] - e[0][2] * e[2][0]) / g.det;
    inv[2][1] = (e[0][1] * e[2][0] - e[0][0] * e[2][1]) / g.det;
    inv[0][2] = (e[0][1] * e[1][2] - e[0][2] * e[1][1]) / g.det;
    inv[1][2] = (e[0][2] * e[1][0] - e[0][0] * e[1][2]) / g.det;
    inv[2][2] = (e[0][0] * e[1][1] - e[0][1] * e[1][0]) / g.det;
  }
  g.volume = g.det / static_cast<double>(factorial(Dim));
  for (int b = 0; b < Dim; ++b) {
    T sum(0.0);
    for (int k = 0; k < Dim; ++k) {
      g.grad[k + 1][b] = inv[k][b];
      sum += inv[k][b];
    }
    g.grad[0][b] = -sum;
  }
  return g;
}

/// Longest edge length.
template <int Dim, class T>
T simplex_diameter(const SimplexCoords<Dim, T>& x) {
  T best(0.0);
  double best_value = -1.0;
  for (int i = 0; i <= Dim; ++i) {
    for (int j = i + 1; j <= Dim; ++j) {
      T s(0.0);
      for (int a = 0; a < Dim; ++a) {
        const T d = x[j][a] - x[i][a];
        s += d * d;
      }
      if (value_of(s) > best_value) {
        best_value = value_of(s);
        best = s;
      }
    }
  }
  using std::sqrt;
  return best_value > 0.0 ? T(sqrt(best)) : T(0.0);
}

/// Outward area vector (unit normal times measure) of a boundary facet.
/// `opposite` is the cell vertex not on the facet; it fixes the orientation.
template <int Dim, class T>
std::array<T, Dim> facet_area_vector(const std::array<std::array<T, Dim>, Dim>& f,
                                     const std::array<double, Dim>& opposite) {
  std::array<T, Dim> a;
  if constexpr (Dim == 2) {
    const T tx = f[1][0] - f[0][0];
    const T ty = f[1][1] - f[0][1];
    a = {ty, -tx};
  } else {
    std::array<T, 3> e1, e2;
    for (int k = 0; k < 3; ++k) {
      e1[k] = f[1][k] - f[0][k];
      e2[k] = f[2][k] - f[0][k];
    }
    a = {0.5 * (e1[1] * e2[2] - e1[2] * e2[1]), 0.5 * (e1[2] * e2[0] - e1[0] * e2[2]),
         0.5 * (e1[0] * e2[1] - e1[1] * e2[0])};
  }
  double dot = 0.0;
  for (int k = 0; k < Dim; ++k) dot += value_of(a[k]) * (opposite[k] - value_of(f[0][k]));
  if (dot > 0.0)
    for (auto& c : a) c = -c;
  return a;
}

}  // namespace packopt
