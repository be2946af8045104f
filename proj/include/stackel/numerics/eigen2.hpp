#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "stackel/error.hpp"

namespace stackel {

struct Eigen2 {
  double s1;  // smaller eigenvalue
  double s2;
  double discriminant;
  Eigen::Vector2d v1;  // unit eigenvectors
  Eigen::Vector2d v2;
};

inline Eigen::Vector2d eigvec_2x2(const Eigen::Matrix2d& m, double s) {
  Eigen::Vector2d a(m(0, 1), s - m(0, 0));
  Eigen::Vector2d b(s - m(1, 1), m(1, 0));
  Eigen::Vector2d v = a.norm() >= b.norm() ? a : b;
  if (v.norm() == 0) {
    // m is a multiple of the identity
    v = Eigen::Vector2d(1, 0);
  }
  return v.normalized();
}

/// Real distinct eigenvalues of a 2x2 matrix, s1 < s2.
inline Eigen2 eig_2x2(const Eigen::Matrix2d& m) {
  const double tr = m.trace();
  const double det = m.determinant();
  // (a - d)^2 + 4bc avoids cancellation in tr^2 - 4det
  const double diff = m(0, 0) - m(1, 1);
  const double disc = diff * diff + 4 * m(0, 1) * m(1, 0);
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if (!(disc > 1e-14 * scale * scale)) throw SpectralError(disc);
  const double root = std::sqrt(disc);
  // stable pair: larger-magnitude root first, the other from the product
  double big = tr >= 0 ? 0.5 * (tr + root) : 0.5 * (tr - root);
  double small = big != 0 ? det / big : 0.5 * (tr - root);
  double s1 = std::min(big, small), s2 = std::max(big, small);
  return {s1, s2, disc, eigvec_2x2(m, s1), eigvec_2x2(m, s2)};
}

}  // namespace stackel
