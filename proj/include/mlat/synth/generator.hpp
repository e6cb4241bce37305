#pragma once

// Procedural labeled motions (walk, wave, squat) built from a fixed skeleton and per-joint
// rotations, plus Gaussian-bump feature maps standing in for image features.

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "mlat/core/errors.hpp"
#include "mlat/core/rng.hpp"
#include "mlat/motion/repr.hpp"
#include "mlat/motion/skeleton.hpp"

namespace mlat::synth {

using motion::Mat3;
using motion::Vec3;

enum class MotionTag { Walk = 0, Wave = 1, Squat = 2 };

inline constexpr std::array<MotionTag, 3> kAllTags{MotionTag::Walk, MotionTag::Wave, MotionTag::Squat};

inline std::string tag_name(MotionTag t) {
  switch (t) {
    case MotionTag::Walk: return "walk";
    case MotionTag::Wave: return "wave";
    case MotionTag::Squat: return "squat";
  }
  return "?";
}

inline MotionTag parse_tag(const std::string& s) {
  for (auto t : kAllTags) {
    if (tag_name(t) == s) return t;
  }
  throw InvalidArgument("unknown motion class '" + s + "'");
}

struct MotionClass {
  MotionTag tag = MotionTag::Walk;
  double amplitude = 0.5;  // radians
  double frequency = 1.0;  // Hz
  double phase = 0.0;      // radians
  double speed = 0.0;      // m/s, walk only
  double heading = 0.0;    // radians

  void validate() const {
    if (!(frequency > 0.0 && frequency < 10.0)) throw InvalidArgument("motion class: frequency must lie in (0, 10) Hz");
  }
};

/// Per-seed parameter draw within class-specific ranges.
inline MotionClass sample_class(MotionTag tag, std::uint64_t seed) {
  Rng rng(seed, 0x5eed);
  MotionClass c;
  c.tag = tag;
  c.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  c.heading = rng.uniform(-std::numbers::pi, std::numbers::pi);
  switch (tag) {
    case MotionTag::Walk:
      c.amplitude = rng.uniform(0.35, 0.55);
      c.frequency = rng.uniform(0.8, 1.2);
      c.speed = rng.uniform(0.8, 1.4);
      break;
    case MotionTag::Wave:
      c.amplitude = rng.uniform(0.35, 0.6);
      c.frequency = rng.uniform(1.5, 2.5);
      break;
    case MotionTag::Squat:
      c.amplitude = rng.uniform(0.7, 1.1);
      c.frequency = rng.uniform(0.5, 0.8);
      break;
  }
  return c;
}

struct GeneratedMotion {
  motion::JointSequence joints;
  std::vector<motion::PoseRotations> rotations;
};

inline Mat3 rot_x(double a) { return motion::axis_angle(Vec3::UnitX(), a); }
inline Mat3 rot_z(double a) { return motion::axis_angle(Vec3::UnitZ(), a); }

inline motion::PoseRotations class_pose(const MotionClass& c, double time) {
  using namespace motion;
  PoseRotations r;
  r.fill(Mat3::Identity());
  const double w = 2.0 * std::numbers::pi * c.frequency;
  const double s = std::sin(w * time + c.phase);
  r[kPelvis] = yaw_matrix(c.heading);
  // Relaxed arms hang at the sides unless overridden below.
  r[kLeftShoulder] = rot_z(-1.25);
  r[kRightShoulder] = rot_z(1.25);
  switch (c.tag) {
    case MotionTag::Walk: {
      const double a = c.amplitude;
      r[kLeftHip] = rot_x(-a * s);
      r[kRightHip] = rot_x(a * s);
      r[kLeftKnee] = rot_x(0.6 * a * (1.0 + s));
      r[kRightKnee] = rot_x(0.6 * a * (1.0 - s));
      r[kLeftShoulder] = rot_z(-1.25) * motion::axis_angle(Vec3::UnitY(), 0.8 * a * s);
      r[kRightShoulder] = rot_z(1.25) * motion::axis_angle(Vec3::UnitY(), 0.8 * a * s);
      r[kSpine1] = rot_x(0.08);
      break;
    }
    case MotionTag::Wave: {
      r[kRightShoulder] = rot_z(-1.1);
      r[kRightElbow] = rot_z(-(0.5 + c.amplitude * s));
      r[kSpine2] = rot_z(0.05 * s);
      break;
    }
    case MotionTag::Squat: {
      const double depth = 0.5 * c.amplitude * (1.0 - std::cos(w * time + c.phase));
      r[kLeftHip] = rot_x(-depth);
      r[kRightHip] = rot_x(-depth);
      r[kLeftKnee] = rot_x(2.0 * depth);
      r[kRightKnee] = rot_x(2.0 * depth);
      r[kLeftAnkle] = rot_x(-depth);
      r[kRightAnkle] = rot_x(-depth);
      r[kSpine1] = rot_x(0.5 * depth);
      r[kLeftShoulder] = rot_z(-1.25) * rot_x(-0.8 * depth);
      r[kRightShoulder] = rot_z(1.25) * rot_x(-0.8 * depth);
      break;
    }
  }
  return r;
}

/// Deterministic in (class, T, seed). The root starts above the XZ origin; its height keeps the
/// lowest foot joint at a fixed clearance above the ground.
inline GeneratedMotion gen_motion(const MotionClass& c, std::size_t T, const motion::Skeleton& sk) {
  c.validate();
  if (T < 16) throw InvalidArgument("gen_motion: need at least 16 frames");
  using namespace motion;
  GeneratedMotion g;
  g.joints.frames.resize(T);
  g.rotations.resize(T);
  const Vec3 dir(std::sin(c.heading), 0.0, std::cos(c.heading));
  constexpr double clearance = 0.04;
  for (std::size_t t = 0; t < T; ++t) {
    const double time = static_cast<double>(t) / kFps;
    g.rotations[t] = class_pose(c, time);
    const Pose local = forward_kinematics(sk, Vec3::Zero(), g.rotations[t]);
    double lowest = local[sk.feet[0]].y();
    for (auto f : sk.feet) lowest = std::min(lowest, local[f].y());
    const Vec3 root = c.speed * time * dir + Vec3(0.0, clearance - lowest, 0.0);
    g.joints.frames[t] = forward_kinematics(sk, root, g.rotations[t]);
  }
  return g;
}

inline GeneratedMotion gen_motion(MotionTag tag, std::size_t T, std::uint64_t seed,
                                  const motion::Skeleton& sk = motion::humanml3d_skeleton()) {
  return gen_motion(sample_class(tag, seed), T, sk);
}

struct FeatureMap {
  std::size_t channels = 0, height = 0, width = 0;
  std::vector<double> values;  // C x H x W

  FeatureMap() = default;
  FeatureMap(std::size_t c, std::size_t h, std::size_t w) : channels(c), height(h), width(w), values(c * h * w, 0.0) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) { return values[(c * height + y) * width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return values[(c * height + y) * width + x]; }
};

/// Channel c holds a unit-peak isotropic Gaussian at joint (c mod 22); pixel (x, y) is column x,
/// row y.
inline FeatureMap render_feature_map(const Tensor& joints2d, std::size_t C, std::size_t H, std::size_t W, double sigma) {
  if (!(sigma > 0)) throw InvalidArgument("render_feature_map: sigma must be positive");
  if (H < 8 || W < 8) throw InvalidArgument("render_feature_map: map must be at least 8x8");
  if (joints2d.rank() != 2 || joints2d.rows() != motion::kJoints || joints2d.cols() != 2) {
    throw ShapeError("render_feature_map: expected [22,2] joints, got " + shape_str(joints2d.shape()));
  }
  FeatureMap fm(C, H, W);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (std::size_t c = 0; c < C; ++c) {
    const double px = joints2d.at(c % motion::kJoints, 0), py = joints2d.at(c % motion::kJoints, 1);
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        const double dx = static_cast<double>(x) - px, dy = static_cast<double>(y) - py;
        fm.at(c, y, x) = std::exp(-(dx * dx + dy * dy) * inv);
      }
    }
  }
  return fm;
}

struct ImageSettings {
  std::size_t channels = 32, height = 16, width = 16;
  double sigma = 1.0;
};

/// Camera that centers a standing body in the map: the root's planar position is removed and
/// the body spans roughly 80% of the map height.
inline motion::WeakPerspectiveCam framing_camera(const ImageSettings& img) {
  const double scale = 0.8 * static_cast<double>(img.height) / 1.8;
  return {scale, 0.5 * static_cast<double>(img.width - 1), 0.1 * static_cast<double>(img.height)};
}

/// 2D joints of one frame under the framing camera.
inline Tensor frame_joints2d(const motion::Pose& pose, const ImageSettings& img) {
  motion::Pose centered = pose;
  const Vec3 planar(pose[0].x(), 0.0, pose[0].z());
  for (auto& p : centered) p -= planar;
  return motion::project_weak_perspective(centered, framing_camera(img));
}

}  // namespace mlat::synth
