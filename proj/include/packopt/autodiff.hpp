#pragma once

// Forward-mode dual numbers used to differentiate element kernels with
// respect to nodal states and vertex coordinates.

#include <Eigen/Core>
#include <unsupported/Eigen/AutoDiff>

#include <array>
#include <cmath>

namespace packopt {

template <int N>
using Dual = Eigen::AutoDiffScalar<Eigen::Matrix<double, N, 1>>;

inline double value_of(double x) { return x; }

template <class Der>
double value_of(const Eigen::AutoDiffScalar<Der>& x) {
  return x.value();
}

/// Euclidean norm whose derivative is taken as zero at the origin.
template <class T, std::size_t N>
T safe_norm(const std::array<T, N>& v) {
  T s(0.0);
  for (const auto& c : v) s += c * c;
  if (value_of(s) <= 0.0) return T(0.0);
  using std::sqrt;
  return sqrt(s);
}

/// Seeds `count` consecutive active variables starting at `offset`.
template <int N, std::size_t M>
std::array<Dual<N>, M> seed(const std::array<double, M>& values, int offset) {
  std::array<Dual<N>, M> out;
  for (std::size_t i = 0; i < M; ++i)
    out[i] = Dual<N>(values[i], N, offset + static_cast<int>(i));
  return out;
}

template <class T, std::size_t M>
std::array<T, M> promote(const std::array<double, M>& values) {
  std::array<T, M> out;
  for (std::size_t i = 0; i < M; ++i) out[i] = T(values[i]);
  return out;
}

}  // namespace packopt
