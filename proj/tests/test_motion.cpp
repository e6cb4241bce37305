#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "mlat/core/rng.hpp"
#include "mlat/motion/io.hpp"
#include "mlat/motion/repr.hpp"
#include "mlat/motion/standardize.hpp"
#include "mlat/synth/generator.hpp"

using namespace mlat;
using namespace mlat::motion;

namespace {

// Rodrigues formula written out by hand, independent of Eigen's AngleAxis.
Mat3 rodrigues(Vec3 axis, double angle) {
  axis.normalize();
  Mat3 k;
  k << 0, -axis.z(), axis.y(), axis.z(), 0, -axis.x(), -axis.y(), axis.x(), 0;
  return Mat3::Identity() + std::sin(angle) * k + (1 - std::cos(angle)) * k * k;
}

Mat3 random_rotation(Rng& rng) {
  Vec3 axis(rng.normal(), rng.normal(), rng.normal());
  return rodrigues(axis, rng.uniform(-std::numbers::pi, std::numbers::pi));
}

double mpjpe(const JointSequence& a, const JointSequence& b) {
  double s = 0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    for (std::size_t j = 0; j < kJoints; ++j) s += (a.at(t, j) - b.at(t, j)).norm();
  }
  return s / static_cast<double>(a.size() * kJoints);
}

JointSequence static_sequence(std::size_t T) {
  const Skeleton sk = humanml3d_skeleton();
  PoseRotations r;
  r.fill(Mat3::Identity());
  JointSequence s;
  s.frames.assign(T, forward_kinematics(sk, Vec3(0, 0.93, 0), r));
  return s;
}

}  // namespace

TEST(Rot6D, IdentityRoundTrip) {
  const Mat3 m = rot6d_to_matrix({1, 0, 0, 0, 1, 0});
  EXPECT_EQ((m - Mat3::Identity()).cwiseAbs().maxCoeff(), 0.0);
  const Rot6D r = matrix_to_rot6d(Mat3::Identity());
  EXPECT_EQ(r, (Rot6D{1, 0, 0, 0, 1, 0}));
}

TEST(Rot6D, QuarterTurnAboutZ) {
  Mat3 rz;
  rz << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  const Rot6D r = matrix_to_rot6d(rz);
  const Rot6D expected{0, 1, 0, -1, 0, 0};
  for (int k = 0; k < 6; ++k) EXPECT_NEAR(r[k], expected[k], 1e-15);
}

TEST(Rot6D, OutputIsProperRotation) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    Rot6D r;
    for (auto& v : r) v = rng.normal();
    const Mat3 m = rot6d_to_matrix(r);
    EXPECT_LT((m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_NEAR(m.determinant(), 1.0, 1e-9);
  }
}

TEST(Rot6D, RandomRotationsRoundTrip) {
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    const Mat3 r = random_rotation(rng);
    EXPECT_LT((rot6d_to_matrix(matrix_to_rot6d(r)) - r).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Rot6D, DegenerateInputsThrow) {
  EXPECT_THROW(rot6d_to_matrix({0, 0, 0, 0, 1, 0}), DegenerateRotation);
  EXPECT_THROW(rot6d_to_matrix({1, 0, 0, 2, 0, 0}), DegenerateRotation);
  EXPECT_THROW(rot6d_to_matrix({1, 0, 0, 0, 0, 0}), DegenerateRotation);
  Mat3 sheared = Mat3::Identity();
  sheared(0, 1) = 0.1;
  EXPECT_THROW(matrix_to_rot6d(sheared), InvalidArgument);
  EXPECT_THROW(matrix_to_rot6d(-Mat3::Identity()), InvalidArgument);
}

TEST(Layout, WidthsSumTo269) {
  const std::size_t widths[] = {3, 1, 63, 126, 66, 4, 6};
  std::size_t sum = 0;
  for (auto w : widths) sum += w;
  EXPECT_EQ(sum, 269u);
  EXPECT_EQ(kGlobalOrientation.end, kReprDim);
  EXPECT_EQ(kFootContacts.end, kLegacyDim);
  EXPECT_EQ(kRelativeJoints.width(), 63u);
  EXPECT_EQ(kLocalRotations.width(), 126u);
  EXPECT_EQ(kVelocities.width(), 66u);
}

TEST(Encode, StaticPose) {
  const Tensor m = encode_repr(static_sequence(10), nullptr, humanml3d_skeleton());
  ASSERT_EQ(m.shape(), (Shape{10, 269}));
  for (std::size_t t = 0; t < 10; ++t) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(m.at(t, c), 0.0);
    for (std::size_t c = kVelocities.begin; c < kVelocities.end; ++c) EXPECT_EQ(m.at(t, c), 0.0);
    for (std::size_t c = kFootContacts.begin; c < kFootContacts.end; ++c) EXPECT_EQ(m.at(t, c), 1.0);
    EXPECT_NEAR(m.at(t, kRootHeight.begin), 0.93, 1e-15);
  }
}

TEST(Encode, ForwardTranslationAtOneMeterPerSecond) {
  JointSequence s = static_sequence(12);
  for (std::size_t t = 0; t < s.size(); ++t) {
    for (auto& p : s.frames[t]) p.z() += static_cast<double>(t) * (1.0 / kFps);
  }
  const Tensor m = encode_repr(s, nullptr, humanml3d_skeleton());
  for (std::size_t t = 0; t < s.size(); ++t) {
    EXPECT_NEAR(std::hypot(m.at(t, 1), m.at(t, 2)), 0.05, 1e-12);
    EXPECT_NEAR(m.at(t, 0), 0.0, 1e-12);
  }
}

TEST(Encode, RejectsShortAndNonFinite) {
  const Skeleton sk = humanml3d_skeleton();
  EXPECT_THROW(encode_repr(static_sequence(1), nullptr, sk), InvalidArgument);
  JointSequence s = static_sequence(4);
  s.frames[2][5].x() = NAN;
  EXPECT_THROW(encode_repr(s, nullptr, sk), NumericalError);
}

TEST(Encode, RoundTripOnSyntheticMotions) {
  const Skeleton sk = humanml3d_skeleton();
  for (auto tag : synth::kAllTags) {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      const auto g = synth::gen_motion(tag, 40, seed, sk);
      const JointSequence back = recover_joints(encode_repr(g.joints, &g.rotations, sk));
      EXPECT_LT(mpjpe(back, g.joints), 1e-4) << synth::tag_name(tag) << " seed " << seed;
    }
  }
}

TEST(Encode, RoundTripWithDerivedRotations) {
  const Skeleton sk = humanml3d_skeleton();
  const auto g = synth::gen_motion(synth::MotionTag::Walk, 40, 5, sk);
  const Tensor m = encode_repr(g.joints, nullptr, sk);
  EXPECT_LT(mpjpe(recover_joints(m), g.joints), 1e-4);
}

TEST(Encode, DerivedRotationsReproduceBoneDirectionsOfChains) {
  const Skeleton sk = humanml3d_skeleton();
  const auto g = synth::gen_motion(synth::MotionTag::Squat, 20, 2, sk);
  for (std::size_t t = 0; t < 20; t += 5) {
    const PoseRotations r = derive_local_rotations(sk, g.joints.frames[t]);
    const Pose fk = forward_kinematics(sk, g.joints.frames[t][0], r);
    // Single-child chains (legs below the hip, forearms) are fully determined by directions.
    for (std::size_t j : {kLeftKnee, kLeftAnkle, kRightKnee, kRightAnkle, kLeftWrist, kRightWrist}) {
      const Vec3 want = g.joints.frames[t][j] - g.joints.frames[t][sk.parents[j]];
      const Vec3 got = fk[j] - fk[sk.parents[j]];
      EXPECT_LT((want.normalized() - got.normalized()).norm(), 1e-9) << "joint " << j;
    }
  }
}

TEST(Encode, GlobalYawEquivariance) {
  const Skeleton sk = humanml3d_skeleton();
  const auto g = synth::gen_motion(synth::MotionTag::Walk, 32, 9, sk);
  const double phi = 0.7;
  const Mat3 ry = yaw_matrix(phi);
  synth::GeneratedMotion rotated = g;
  for (std::size_t t = 0; t < 32; ++t) {
    for (auto& p : rotated.joints.frames[t]) p = ry * p;
    rotated.rotations[t][0] = ry * rotated.rotations[t][0];
  }
  const JointSequence a = recover_joints(encode_repr(g.joints, &g.rotations, sk));
  const JointSequence b = recover_joints(encode_repr(rotated.joints, &rotated.rotations, sk));
  for (std::size_t t = 0; t < 32; ++t) {
    for (std::size_t j = 0; j < kJoints; ++j) EXPECT_LT((ry * a.at(t, j) - b.at(t, j)).norm(), 1e-6);
  }
}

TEST(Encode, LegacySliceIgnoresOrientationTail) {
  const Skeleton sk = humanml3d_skeleton();
  const auto g = synth::gen_motion(synth::MotionTag::Wave, 24, 1, sk);
  Tensor m = encode_repr(g.joints, &g.rotations, sk);
  // A different absolute orientation with identical positions changes only the tail.
  auto rots = g.rotations;
  for (auto& r : rots) r[0] = r[0] * axis_angle(Vec3::UnitX(), 0.3);
  const Tensor m2 = encode_repr(g.joints, &rots, sk);
  bool tail_differs = false;
  for (std::size_t t = 0; t < 24; ++t) {
    for (std::size_t c = 0; c < kLegacyDim; ++c) {
      if (c >= kLocalRotations.begin && c < kLocalRotations.end) continue;
      if (c < 3) continue;
      ASSERT_EQ(m.at(t, c), m2.at(t, c)) << "column " << c;
    }
    for (std::size_t c = kGlobalOrientation.begin; c < kReprDim; ++c) tail_differs |= m.at(t, c) != m2.at(t, c);
  }
  EXPECT_TRUE(tail_differs);
  Tensor zeroed = m;
  for (std::size_t t = 0; t < 24; ++t) {
    for (std::size_t c = kGlobalOrientation.begin; c < kReprDim; ++c) zeroed.at(t, c) = 0.0;
  }
  const JointSequence a = recover_joints(m);
  const JointSequence b = recover_joints(zeroed, {.yaw0 = initial_yaw(m)});
  EXPECT_EQ(mpjpe(a, b), 0.0);
  EXPECT_EQ(initial_yaw(zeroed), 0.0);
}

TEST(Recover, ZeroIncrementsKeepRootAtHeight) {
  Tensor m({6, kReprDim});
  for (std::size_t t = 0; t < 6; ++t) m.at(t, kRootHeight.begin) = 0.8;
  const JointSequence s = recover_joints(m);
  for (std::size_t t = 0; t < 6; ++t) EXPECT_EQ(s.at(t, 0), Vec3(0, 0.8, 0));
}

TEST(Recover, RejectsWrongWidth) { EXPECT_THROW(recover_joints(Tensor({4, 263})), ShapeError); }

TEST(IntegrateRoot, ZeroIncrementsAreConstant) {
  const auto s = integrate_root(Tensor({5, 3}), 0.4, 1.0, -2.0);
  ASSERT_EQ(s.size(), 6u);
  for (const auto& st : s) {
    EXPECT_EQ(st.yaw, 0.4);
    EXPECT_EQ(st.x, 1.0);
    EXPECT_EQ(st.z, -2.0);
  }
}

TEST(IntegrateRoot, FullTurnReturnsToStart) {
  const std::size_t T = 37;
  Tensor inc({T, 3});
  for (std::size_t t = 0; t < T; ++t) inc.at(t, 0) = 2 * std::numbers::pi / T;
  const auto s = integrate_root(inc, 0.25);
  EXPECT_NEAR(wrap_angle(s.back().yaw - 0.25), 0.0, 1e-9);
}

TEST(IntegrateRoot, StraightLine) {
  const std::size_t T = 20;
  Tensor inc({T, 3});
  for (std::size_t t = 0; t < T; ++t) inc.at(t, 2) = 0.05;
  const auto s = integrate_root(inc);
  EXPECT_NEAR(s.back().z, T * 0.05, 1e-12);
  EXPECT_EQ(s.back().x, 0.0);
  // Heading pi/2 walks along +X.
  const auto turned = integrate_root(inc, std::numbers::pi / 2);
  EXPECT_NEAR(turned.back().x, T * 0.05, 1e-12);
  EXPECT_NEAR(turned.back().z, 0.0, 1e-12);
}

TEST(FootContacts, StaticIsAllOnes) {
  const Tensor c = detect_foot_contacts(static_sequence(8), humanml3d_skeleton());
  for (double v : c.values()) EXPECT_EQ(v, 1.0);
}

TEST(FootContacts, HopFlightIsZero) {
  // Rise at 0.1 m/frame for frames 4..8, fall back for 8..12: squared speed 0.01 >> 2e-3.
  JointSequence s = static_sequence(16);
  auto lift = [](std::size_t t) -> double {
    if (t <= 4 || t >= 12) return 0.0;
    return t <= 8 ? 0.1 * static_cast<double>(t - 4) : 0.1 * static_cast<double>(12 - t);
  };
  for (std::size_t t = 0; t < 16; ++t) {
    for (auto& p : s.frames[t]) p.y() += lift(t);
  }
  const Tensor c = detect_foot_contacts(s, humanml3d_skeleton());
  for (std::size_t t = 0; t < 16; ++t) {
    for (std::size_t f = 0; f < 4; ++f) {
      const double v = c.at(t, f);
      EXPECT_TRUE(v == 0.0 || v == 1.0);
      EXPECT_EQ(v, (t >= 4 && t < 12) ? 0.0 : 1.0) << "frame " << t;
    }
  }
}

TEST(FootContacts, InvariantUnderGlobalTranslation) {
  const Skeleton sk = humanml3d_skeleton();
  const auto g = synth::gen_motion(synth::MotionTag::Walk, 40, 3, sk);
  JointSequence moved = g.joints;
  for (auto& f : moved.frames) {
    for (auto& p : f) p += Vec3(3.0, 0.5, -7.0);
  }
  EXPECT_EQ(detect_foot_contacts(g.joints, sk), detect_foot_contacts(moved, sk));
}

TEST(Projection, OrthographicDrop) {
  Pose p;
  for (std::size_t j = 0; j < kJoints; ++j) p[j] = Vec3(0.1 * j, -0.2 * j, 5.0 + j);
  const Tensor px = project_weak_perspective(p, {1.0, 0.0, 0.0});
  for (std::size_t j = 0; j < kJoints; ++j) {
    EXPECT_EQ(px.at(j, 0), p[j].x());
    EXPECT_EQ(px.at(j, 1), p[j].y());
  }
}

TEST(Projection, HandComputedTable) {
  Pose p;
  for (auto& v : p) v = Vec3::Zero();
  p[0] = Vec3(0.5, 1.0, 3.0);
  p[1] = Vec3(-0.25, 0.0, -1.0);
  p[2] = Vec3(1.0, -2.0, 0.0);
  const Tensor px = project_weak_perspective(p, {4.0, 10.0, 20.0});
  EXPECT_EQ(px.at(0, 0), 12.0);
  EXPECT_EQ(px.at(0, 1), 24.0);
  EXPECT_EQ(px.at(1, 0), 9.0);
  EXPECT_EQ(px.at(1, 1), 20.0);
  EXPECT_EQ(px.at(2, 0), 14.0);
  EXPECT_EQ(px.at(2, 1), 12.0);
  const Tensor twice = project_weak_perspective(p, {8.0, 10.0, 20.0});
  EXPECT_EQ(twice.at(2, 0) - 10.0, 2 * (px.at(2, 0) - 10.0));
  EXPECT_THROW(project_weak_perspective(p, {0.0, 0.0, 0.0}), InvalidArgument);
}

TEST(Standardizer, InvertsAndHasUnitMoments) {
  Rng rng(4);
  std::vector<Tensor> seqs;
  for (int i = 0; i < 5; ++i) {
    Tensor t = rng.normal_tensor({7, 3}, 2.0);
    for (std::size_t r = 0; r < 7; ++r) t.at(r, 2) = 1.5;  // constant channel hits the floor
    seqs.push_back(t);
  }
  const auto st = Standardizer::fit(seqs, 0.1);
  EXPECT_EQ(st.stddev[2], 0.1);
  EXPECT_LT(max_abs_diff(st.invert(st.apply(seqs[0])), seqs[0]), 1e-12);
  const auto back = Standardizer::unpack(st.pack());
  EXPECT_EQ(back.mean, st.mean);
  EXPECT_EQ(back.stddev, st.stddev);
}

TEST(Files, M269AndJnt3RoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "mlat_motion_io";
  std::filesystem::create_directories(dir);
  const Skeleton sk = humanml3d_skeleton();
  const auto g = synth::gen_motion(synth::MotionTag::Squat, 18, 4, sk);
  const Tensor m = encode_repr(g.joints, &g.rotations, sk);
  write_m269((dir / "a.m269").string(), m);
  EXPECT_EQ(read_m269((dir / "a.m269").string()), m);
  EXPECT_EQ(std::filesystem::file_size(dir / "a.m269"), 12u + 18u * 269u * 8u);
  write_jnt3((dir / "a.jnt3").string(), g.joints);
  EXPECT_EQ(read_jnt3((dir / "a.jnt3").string()).as_tensor(), g.joints.as_tensor());
  EXPECT_THROW(read_m269((dir / "a.jnt3").string()), FormatError);
}
