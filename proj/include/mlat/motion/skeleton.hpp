#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "mlat/core/errors.hpp"
#include "mlat/motion/rotation.hpp"

namespace mlat::motion {

inline constexpr std::size_t kJoints = 22;
inline constexpr double kFps = 20.0;

// HumanML3D joint order.
enum Joint : std::size_t {
  kPelvis = 0, kLeftHip, kRightHip, kSpine1, kLeftKnee, kRightKnee, kSpine2, kLeftAnkle, kRightAnkle, kSpine3,
  kLeftFoot, kRightFoot, kNeck, kLeftCollar, kRightCollar, kHead, kLeftShoulder, kRightShoulder, kLeftElbow,
  kRightElbow, kLeftWrist, kRightWrist
};

using Pose = std::array<Vec3, kJoints>;
using PoseRotations = std::array<Mat3, kJoints>;

struct Skeleton {
  std::array<std::size_t, kJoints> parents{};
  std::array<Vec3, kJoints> offsets{};  // rest offset from parent, meters (root: unused)
  std::array<std::size_t, 4> feet{kLeftAnkle, kLeftFoot, kRightAnkle, kRightFoot};

  /// Lowest-indexed child of each joint, or the joint itself for leaves.
  std::size_t first_child(std::size_t j) const {
    for (std::size_t c = 1; c < kJoints; ++c) {
      if (parents[c] == j) return c;
    }
    return j;
  }

  void validate() const {
    if (parents[0] != 0) throw InvalidArgument("skeleton: root must be its own parent");
    for (std::size_t j = 1; j < kJoints; ++j) {
      if (parents[j] >= j) throw InvalidArgument("skeleton: parents must precede children");
      if (!offsets[j].allFinite()) throw InvalidArgument("skeleton: non-finite offset");
    }
  }
};

/// Standard 22-joint chain with adult-sized rest offsets. Rest pose is a T-pose facing +Z,
/// Y up, left side at +X.
inline Skeleton humanml3d_skeleton() {
  Skeleton s;
  s.parents = {0, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19};
  auto& o = s.offsets;
  o[kPelvis] = {0, 0, 0};
  o[kLeftHip] = {0.06, -0.09, 0};
  o[kRightHip] = {-0.06, -0.09, 0};
  o[kSpine1] = {0, 0.11, -0.01};
  o[kLeftKnee] = {0.01, -0.38, 0};
  o[kRightKnee] = {-0.01, -0.38, 0};
  o[kSpine2] = {0, 0.13, 0.01};
  o[kLeftAnkle] = {0, -0.40, -0.02};
  o[kRightAnkle] = {0, -0.40, -0.02};
  o[kSpine3] = {0, 0.05, 0};
  o[kLeftFoot] = {0.01, -0.05, 0.12};
  o[kRightFoot] = {-0.01, -0.05, 0.12};
  o[kNeck] = {0, 0.21, -0.02};
  o[kLeftCollar] = {0.07, 0.12, -0.01};
  o[kRightCollar] = {-0.07, 0.12, -0.01};
  o[kHead] = {0, 0.10, 0.03};
  o[kLeftShoulder] = {0.12, 0.03, 0};
  o[kRightShoulder] = {-0.12, 0.03, 0};
  o[kLeftElbow] = {0.26, 0, 0};
  o[kRightElbow] = {-0.26, 0, 0};
  o[kLeftWrist] = {0.25, 0, 0};
  o[kRightWrist] = {-0.25, 0, 0};
  return s;
}

/// Global joint positions from a root position and per-joint local rotations. Joint j's
/// rotation is relative to its parent's global frame and orients the bones to its children.
inline Pose forward_kinematics(const Skeleton& s, const Vec3& root, const PoseRotations& local,
                               PoseRotations* global_out = nullptr) {
  PoseRotations g;
  Pose p;
  g[0] = local[0];
  p[0] = root;
  for (std::size_t j = 1; j < kJoints; ++j) {
    const std::size_t par = s.parents[j];
    g[j] = g[par] * local[j];
    p[j] = p[par] + g[par] * s.offsets[j];
  }
  if (global_out) *global_out = g;
  return p;
}

/// Twist-free local rotations consistent with observed positions. The root heading comes from
/// the hip axis; every other joint turns its first child's rest bone onto the observed bone.
/// Positions under-determine twist, so this is an approximation for joints with several children.
inline PoseRotations derive_local_rotations(const Skeleton& s, const Pose& p) {
  PoseRotations local, global;
  const Vec3 across = p[kLeftHip] - p[kRightHip];
  Vec3 fwd = across.cross(Vec3::UnitY());
  fwd.y() = 0;
  const double yaw = fwd.norm() > 1e-12 ? std::atan2(fwd.x(), fwd.z()) : 0.0;
  global[0] = yaw_matrix(yaw);
  local[0] = global[0];
  for (std::size_t j = 1; j < kJoints; ++j) {
    const Mat3& gp = global[s.parents[j]];
    const std::size_t c = s.first_child(j);
    Mat3 gj = gp;
    if (c != j) {
      const Vec3 rest = gp * s.offsets[c];
      const Vec3 seen = p[c] - p[j];
      if (rest.norm() > 1e-12 && seen.norm() > 1e-12) gj = rotation_between(rest, seen) * gp;
    }
    global[j] = gj;
    local[j] = gp.transpose() * gj;
  }
  return local;
}

}  // namespace mlat::motion
