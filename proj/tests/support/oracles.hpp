// Test-only oracles, independent of the implementation paths they check.
#pragma once

#include <random>

#include "tandem/lie.hpp"

namespace test_support {

using tandem::Mat3;
using tandem::Mat5;
using tandem::Vec3;

inline std::mt19937_64 make_rng(std::uint64_t seed) {
  return std::mt19937_64(seed);
}

inline Vec3 random_vec3(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return Vec3(u(rng), u(rng), u(rng));
}

// Uniform random axis, angle bounded by max_angle.
inline Vec3 random_rotation_log(std::mt19937_64& rng, double max_angle) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 axis(n(rng), n(rng), n(rng));
  while (axis.norm() < 1e-9) axis = Vec3(n(rng), n(rng), n(rng));
  axis.normalize();
  std::uniform_real_distribution<double> u(0.0, max_angle);
  return u(rng) * axis;
}

inline Mat3 random_rotation(std::mt19937_64& rng, double max_angle = 3.0) {
  return tandem::exp_so3(random_rotation_log(rng, max_angle));
}

// Matrix exponential by scaling-and-squaring on a plain Taylor series;
// deliberately naive so it stays independent of both the closed-form group
// exponentials and the Pade-based exponential used in discretization.
template <typename Matrix>
Matrix taylor_expm(const Matrix& m, int terms = 30) {
  double norm = m.template lpNorm<Eigen::Infinity>();
  int squarings = 0;
  while (norm > 0.25) {
    norm /= 2.0;
    ++squarings;
  }
  const Matrix scaled = m / std::pow(2.0, squarings);
  Matrix result = Matrix::Identity(m.rows(), m.cols());
  Matrix term = Matrix::Identity(m.rows(), m.cols());
  for (int k = 1; k <= terms; ++k) {
    term = (term * scaled / static_cast<double>(k)).eval();
    result += term;
  }
  for (int s = 0; s < squarings; ++s) result = (result * result).eval();
  return result;
}

}  // namespace test_support
