#pragma once

#include <Eigen/Geometry>
#include <array>
#include <cmath>
#include <numbers>

#include "mlat/core/errors.hpp"

namespace mlat::motion {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// First two matrix columns, stored column after column: (c1x, c1y, c1z, c2x, c2y, c2z).
using Rot6D = std::array<double, 6>;

inline constexpr double kDegenerateNorm = 1e-12;

inline Mat3 rot6d_to_matrix(const Rot6D& r) {
  const Vec3 a(r[0], r[1], r[2]);
  const Vec3 b(r[3], r[4], r[5]);
  const double na = a.norm();
  if (!(na > kDegenerateNorm)) throw DegenerateRotation("rot6d: first column is zero");
  const Vec3 c1 = a / na;
  const Vec3 resid = b - c1.dot(b) * c1;
  const double nr = resid.norm();
  if (!(nr > kDegenerateNorm * std::max(1.0, b.norm()))) {
    throw DegenerateRotation("rot6d: second column is zero or parallel to the first");
  }
  const Vec3 c2 = resid / nr;
  Mat3 m;
  m.col(0) = c1;
  m.col(1) = c2;
  m.col(2) = c1.cross(c2);
  return m;
}

inline Rot6D matrix_to_rot6d(const Mat3& m, double tol = 1e-6) {
  if (!m.allFinite()) throw InvalidArgument("matrix_to_rot6d: non-finite matrix");
  const double ortho = (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho > tol || std::abs(m.determinant() - 1.0) > tol) {
    throw InvalidArgument("matrix_to_rot6d: matrix is not a rotation (orthonormality error " + std::to_string(ortho) +
                          ", det " + std::to_string(m.determinant()) + ")");
  }
  return {m(0, 0), m(1, 0), m(2, 0), m(0, 1), m(1, 1), m(2, 1)};
}

inline Mat3 axis_angle(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

/// Rotation about +Y; yaw 0 faces +Z and yaw pi/2 faces +X.
inline Mat3 yaw_matrix(double yaw) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  Mat3 m;
  m << c, 0, s, 0, 1, 0, -s, 0, c;
  return m;
}

/// Heading of a root orientation: atan2 of the rotated +Z axis projected on the XZ plane.
inline double yaw_of(const Mat3& r) {
  const Vec3 f = r.col(2);
  return std::atan2(f.x(), f.z());
}

inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a + std::numbers::pi, two_pi);
  if (a < 0) a += two_pi;
  return a - std::numbers::pi;
}

/// Smallest rotation taking direction `from` onto direction `to` (both non-zero).
inline Mat3 rotation_between(const Vec3& from, const Vec3& to) {
  return Eigen::Quaterniond::FromTwoVectors(from, to).toRotationMatrix();
}

}  // namespace mlat::motion
