#pragma once

// Simplex quadrature rules in barycentric form. Weights sum to one and are
// scaled by the simplex measure at the call site.

#include <array>
#include <span>

namespace packopt {

template <int Dim>
struct QuadraturePoint {
  std::array<double, Dim + 1> bary;
  double weight;
};

namespace detail {

// 3-point Gauss-Legendre on a segment (degree 5).
inline constexpr std::array<QuadraturePoint<1>, 3> kSegmentRule{{
    {{0.5, 0.5}, 4.0 / 9.0},
    {{0.5 + 0.3872983346207417, 0.5 - 0.3872983346207417}, 5.0 / 18.0},
    {{0.5 - 0.3872983346207417, 0.5 + 0.3872983346207417}, 5.0 / 18.0},
}};

// Dunavant degree-4 rule, 6 points.
inline constexpr double kTriA = 0.445948490915965;
inline constexpr double kTriB = 0.108103018168070;
inline constexpr double kTriC = 0.091576213509771;
inline constexpr double kTriD = 0.816847572980459;
inline constexpr double kTriWa = 0.223381589678011;
inline constexpr double kTriWc = 0.109951743655322;
inline constexpr std::array<QuadraturePoint<2>, 6> kTriangleRule{{
    {{kTriB, kTriA, kTriA}, kTriWa},
    {{kTriA, kTriB, kTriA}, kTriWa},
    {{kTriA, kTriA, kTriB}, kTriWa},
    {{kTriD, kTriC, kTriC}, kTriWc},
    {{kTriC, kTriD, kTriC}, kTriWc},
    {{kTriC, kTriC, kTriD}, kTriWc},
}};

// Keast degree-4 rule, 11 points (one negative weight).
inline constexpr double kTetW0 = -0.0789333333333333;
inline constexpr double kTetW1 = 0.0457333333333333;
inline constexpr double kTetW2 = 0.1493333333333333;
inline constexpr double kTetA = 0.0714285714285714;
inline constexpr double kTetB = 0.7857142857142857;
inline constexpr double kTetC = 0.3994035761667992;
inline constexpr double kTetD = 0.1005964238332008;
inline constexpr std::array<QuadraturePoint<3>, 11> kTetrahedronRule{{
    {{0.25, 0.25, 0.25, 0.25}, kTetW0},
    {{kTetB, kTetA, kTetA, kTetA}, kTetW1},
    {{kTetA, kTetB, kTetA, kTetA}, kTetW1},
    {{kTetA, kTetA, kTetB, kTetA}, kTetW1},
    {{kTetA, kTetA, kTetA, kTetB}, kTetW1},
    {{kTetC, kTetC, kTetD, kTetD}, kTetW2},
    {{kTetC, kTetD, kTetC, kTetD}, kTetW2},
    {{kTetC, kTetD, kTetD, kTetC}, kTetW2},
    {{kTetD, kTetC, kTetC, kTetD}, kTetW2},
    {{kTetD, kTetC, kTetD, kTetC}, kTetW2},
    {{kTetD, kTetD, kTetC, kTetC}, kTetW2},
}};

}  // namespace detail

/// Degree-4 (or better) rule on the reference simplex of dimension Dim.
template <int Dim>
constexpr std::span<const QuadraturePoint<Dim>> simplex_rule() {
  if constexpr (Dim == 1) return detail::kSegmentRule;
  else if constexpr (Dim == 2) return detail::kTriangleRule;
  else return detail::kTetrahedronRule;
}

}  // namespace packopt
