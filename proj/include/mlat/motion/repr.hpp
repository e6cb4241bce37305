#pragma once

// 269-dim per-frame motion features.
//
//   [0,3)     root increment: yaw change, planar step (x, z) in the current heading frame
//   [3,4)     root height
//   [4,67)    joints 1..21 relative to the root: planar root offset and heading removed, y absolute
//   [67,193)  local rotations of joints 1..21, 6D
//   [193,259) joint velocities (22 x 3) in the current heading frame, meters per frame
//   [259,263) foot contacts: left ankle, left toe, right ankle, right toe
//   [263,269) absolute root orientation, 6D
//
// Columns [0,263) are the conventional 263-dim layout; the orientation tail is never read
// when rebuilding them.

#include <cmath>
#include <optional>
#include <vector>

#include "mlat/core/errors.hpp"
#include "mlat/core/tensor.hpp"
#include "mlat/motion/rotation.hpp"
#include "mlat/motion/skeleton.hpp"

namespace mlat::motion {

struct Slice {
  std::size_t begin, end;
  constexpr std::size_t width() const { return end - begin; }
};

inline constexpr Slice kRootIncrement{0, 3};
inline constexpr Slice kRootHeight{3, 4};
inline constexpr Slice kRelativeJoints{4, 67};
inline constexpr Slice kLocalRotations{67, 193};
inline constexpr Slice kVelocities{193, 259};
inline constexpr Slice kFootContacts{259, 263};
inline constexpr Slice kGlobalOrientation{263, 269};
inline constexpr std::size_t kReprDim = 269;
inline constexpr std::size_t kLegacyDim = 263;

static_assert(kRootIncrement.width() + kRootHeight.width() + kRelativeJoints.width() + kLocalRotations.width() +
                  kVelocities.width() + kFootContacts.width() + kGlobalOrientation.width() ==
              kReprDim);

inline constexpr double kContactThreshold = 2e-3;  // squared displacement, m^2 per frame^2

struct JointSequence {
  std::vector<Pose> frames;
  double fps = kFps;

  std::size_t size() const noexcept { return frames.size(); }
  const Vec3& at(std::size_t t, std::size_t j) const { return frames[t][j]; }

  /// T x 66 matrix view, joint-major within a frame.
  Tensor as_tensor() const {
    Tensor out({size(), kJoints * 3});
    for (std::size_t t = 0; t < size(); ++t) {
      for (std::size_t j = 0; j < kJoints; ++j) {
        for (int k = 0; k < 3; ++k) out.at(t, 3 * j + k) = frames[t][j][k];
      }
    }
    return out;
  }

  static JointSequence from_tensor(const Tensor& m) {
    if (m.rank() != 2 || m.cols() != kJoints * 3) {
      throw ShapeError("joint sequence: expected [T,66], got " + shape_str(m.shape()));
    }
    JointSequence s;
    s.frames.resize(m.rows());
    for (std::size_t t = 0; t < m.rows(); ++t) {
      for (std::size_t j = 0; j < kJoints; ++j) s.frames[t][j] = Vec3(m.at(t, 3 * j), m.at(t, 3 * j + 1), m.at(t, 3 * j + 2));
    }
    return s;
  }
};

struct RootState {
  double yaw = 0, x = 0, z = 0;
};

/// Accumulates per-frame increments. Returns T+1 states: the initial state, then the state after
/// each increment. Planar steps are rotated by the heading before the step's own yaw change.
inline std::vector<RootState> integrate_root(const Tensor& increments, double initial_yaw = 0.0,
                                             double initial_x = 0.0, double initial_z = 0.0) {
  if (increments.rank() != 2 || increments.cols() != 3) {
    throw ShapeError("integrate_root: expected [T,3], got " + shape_str(increments.shape()));
  }
  std::vector<RootState> out;
  out.reserve(increments.rows() + 1);
  RootState s{initial_yaw, initial_x, initial_z};
  out.push_back(s);
  for (std::size_t t = 0; t < increments.rows(); ++t) {
    const double c = std::cos(s.yaw), sn = std::sin(s.yaw);
    const double lx = increments.at(t, 1), lz = increments.at(t, 2);
    s.x += c * lx + sn * lz;
    s.z += -sn * lx + c * lz;
    s.yaw += increments.at(t, 0);
    out.push_back(s);
  }
  return out;
}

inline Tensor detect_foot_contacts(const JointSequence& joints, const Skeleton& sk,
                                   double threshold = kContactThreshold) {
  const std::size_t T = joints.size();
  if (T < 2) throw InvalidArgument("detect_foot_contacts: need at least 2 frames");
  Tensor out({T, 4});
  for (std::size_t t = 0; t + 1 < T; ++t) {
    for (std::size_t f = 0; f < 4; ++f) {
      const std::size_t j = sk.feet[f];
      const double v2 = (joints.at(t + 1, j) - joints.at(t, j)).squaredNorm();
      out.at(t, f) = v2 < threshold ? 1.0 : 0.0;
    }
  }
  for (std::size_t f = 0; f < 4; ++f) out.at(T - 1, f) = out.at(T - 2, f);
  return out;
}

struct EncodeOptions {
  double contact_threshold = kContactThreshold;
};

inline void put6(Tensor& m, std::size_t t, std::size_t col, const Rot6D& r) {
  for (std::size_t k = 0; k < 6; ++k) m.at(t, col + k) = r[k];
}

/// Encodes T >= 2 frames into T x 269. The last frame's increment and velocities repeat the
/// previous frame's. When `local_rots` is absent the rotations are derived from positions.
inline Tensor encode_repr(const JointSequence& joints, const std::vector<PoseRotations>* local_rots,
                          const Skeleton& sk, const EncodeOptions& opt = {}) {
  const std::size_t T = joints.size();
  if (T < 2) throw InvalidArgument("encode_repr: need at least 2 frames, got " + std::to_string(T));
  if (local_rots && local_rots->size() != T) throw ShapeError("encode_repr: rotation count does not match frame count");
  for (const auto& pose : joints.frames) {
    for (const auto& p : pose) {
      if (!p.allFinite()) throw NumericalError("encode_repr: non-finite joint position");
    }
  }
  std::vector<PoseRotations> derived;
  if (!local_rots) {
    derived.reserve(T);
    for (const auto& pose : joints.frames) derived.push_back(derive_local_rotations(sk, pose));
    local_rots = &derived;
  }
  std::vector<double> yaw(T);
  for (std::size_t t = 0; t < T; ++t) yaw[t] = yaw_of((*local_rots)[t][0]);

  Tensor m({T, kReprDim});
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t n = t + 1 < T ? t : T - 2;  // frame whose forward difference is used
    const Vec3& root = joints.at(t, 0);
    const Mat3 inv_heading = yaw_matrix(yaw[t]).transpose();
    const Mat3 inv_heading_n = yaw_matrix(yaw[n]).transpose();

    const Vec3 step = inv_heading_n * Vec3(joints.at(n + 1, 0).x() - joints.at(n, 0).x(), 0.0,
                                           joints.at(n + 1, 0).z() - joints.at(n, 0).z());
    m.at(t, kRootIncrement.begin) = wrap_angle(yaw[n + 1] - yaw[n]);
    m.at(t, kRootIncrement.begin + 1) = step.x();
    m.at(t, kRootIncrement.begin + 2) = step.z();
    m.at(t, kRootHeight.begin) = root.y();

    const Vec3 planar(root.x(), 0.0, root.z());
    for (std::size_t j = 1; j < kJoints; ++j) {
      const Vec3 q = inv_heading * (joints.at(t, j) - planar);
      for (int k = 0; k < 3; ++k) m.at(t, kRelativeJoints.begin + 3 * (j - 1) + k) = q[k];
      put6(m, t, kLocalRotations.begin + 6 * (j - 1), matrix_to_rot6d((*local_rots)[t][j]));
    }
    for (std::size_t j = 0; j < kJoints; ++j) {
      const Vec3 v = inv_heading_n * (joints.at(n + 1, j) - joints.at(n, j));
      for (int k = 0; k < 3; ++k) m.at(t, kVelocities.begin + 3 * j + k) = v[k];
    }
    put6(m, t, kGlobalOrientation.begin, matrix_to_rot6d((*local_rots)[t][0]));
  }
  const Tensor contacts = detect_foot_contacts(joints, sk, opt.contact_threshold);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t f = 0; f < 4; ++f) m.at(t, kFootContacts.begin + f) = contacts.at(t, f);
  }
  return m;
}

inline void require_repr(const Tensor& repr, const char* who) {
  if (repr.rank() != 2 || repr.cols() != kReprDim) {
    throw ShapeError(std::string(who) + ": expected [T,269], got " + shape_str(repr.shape()));
  }
}

/// Initial heading stored in frame 0's orientation tail; 0 when the tail is zeroed or degenerate.
inline double initial_yaw(const Tensor& repr) {
  Rot6D r;
  for (std::size_t k = 0; k < 6; ++k) r[k] = repr.at(0, kGlobalOrientation.begin + k);
  try {
    return yaw_of(rot6d_to_matrix(r));
  } catch (const DegenerateRotation&) {
    return 0.0;
  }
}

struct RecoverOptions {
  std::optional<double> yaw0;  // defaults to initial_yaw(repr)
  double x0 = 0.0, z0 = 0.0;
};

/// Rebuilds world positions from the root increments, root height and relative joints.
inline JointSequence recover_joints(const Tensor& repr, const RecoverOptions& opt = {}) {
  require_repr(repr, "recover_joints");
  const std::size_t T = repr.rows();
  Tensor inc({T, 3});
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t k = 0; k < 3; ++k) inc.at(t, k) = repr.at(t, kRootIncrement.begin + k);
  }
  const auto states = integrate_root(inc, opt.yaw0.value_or(T ? initial_yaw(repr) : 0.0), opt.x0, opt.z0);
  JointSequence out;
  out.frames.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    const RootState& s = states[t];
    const Mat3 heading = yaw_matrix(s.yaw);
    const Vec3 planar(s.x, 0.0, s.z);
    out.frames[t][0] = Vec3(s.x, repr.at(t, kRootHeight.begin), s.z);
    for (std::size_t j = 1; j < kJoints; ++j) {
      const std::size_t c = kRelativeJoints.begin + 3 * (j - 1);
      out.frames[t][j] = heading * Vec3(repr.at(t, c), repr.at(t, c + 1), repr.at(t, c + 2)) + planar;
    }
  }
  return out;
}

struct WeakPerspectiveCam {
  double scale = 1.0;  // pixels per meter
  double tx = 0.0, ty = 0.0;
};

/// 22 x 2 pixel coordinates: scale * (X, Y) + translation.
inline Tensor project_weak_perspective(const Pose& pose, const WeakPerspectiveCam& cam) {
  if (!(cam.scale > 0)) throw InvalidArgument("project_weak_perspective: scale must be positive");
  Tensor out({kJoints, 2});
  for (std::size_t j = 0; j < kJoints; ++j) {
    out.at(j, 0) = cam.scale * pose[j].x() + cam.tx;
    out.at(j, 1) = cam.scale * pose[j].y() + cam.ty;
  }
  return out;
}

}  // namespace mlat::motion
