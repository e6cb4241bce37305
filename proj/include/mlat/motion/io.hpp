#pragma once

// On-disk motion files.
//   M269: "M269", u32 version, u32 T, T*269 float64
//   JNT3: "JNT3", u32 version, u32 T, T*22*3 float64

#include <string>

#include "mlat/core/binary_io.hpp"
#include "mlat/motion/repr.hpp"

namespace mlat::motion {

inline constexpr std::uint32_t kMotionFileVersion = 1;

inline void write_m269(const std::string& path, const Tensor& repr) {
  require_repr(repr, "write_m269");
  io::Writer w;
  w.magic("M269");
  w.u32(kMotionFileVersion);
  w.u32(static_cast<std::uint32_t>(repr.rows()));
  w.f64s(repr.raw());
  w.save(path);
}

inline Tensor read_m269(const std::string& path) {
  auto r = io::Reader::open(path);
  r.expect_magic("M269");
  if (const auto v = r.u32(); v != kMotionFileVersion) throw FormatError(path + ": unsupported M269 version " + std::to_string(v));
  const std::size_t T = r.u32();
  Tensor out({T, kReprDim}, r.f64s(T * kReprDim));
  if (!r.at_end()) throw FormatError(path + ": trailing bytes");
  return out;
}

inline void write_jnt3(const std::string& path, const JointSequence& joints) {
  io::Writer w;
  w.magic("JNT3");
  w.u32(kMotionFileVersion);
  w.u32(static_cast<std::uint32_t>(joints.size()));
  w.f64s(joints.as_tensor().raw());
  w.save(path);
}

inline JointSequence read_jnt3(const std::string& path) {
  auto r = io::Reader::open(path);
  r.expect_magic("JNT3");
  if (const auto v = r.u32(); v != kMotionFileVersion) throw FormatError(path + ": unsupported JNT3 version " + std::to_string(v));
  const std::size_t T = r.u32();
  Tensor m({T, kJoints * 3}, r.f64s(T * kJoints * 3));
  if (!r.at_end()) throw FormatError(path + ": trailing bytes");
  return JointSequence::from_tensor(m);
}

}  // namespace mlat::motion
