#include <gtest/gtest.h>

#include <Eigen/Core>
#include <complex>
#include <filesystem>
#include <fstream>
#include <map>
#include <unsupported/Eigen/FFT>

#include "mlat/motion/repr.hpp"
#include "mlat/synth/corpus.hpp"

using namespace mlat;
using namespace mlat::synth;
using motion::Vec3;

TEST(GenMotion, DeterministicPerSeed) {
  for (auto tag : kAllTags) {
    const auto a = gen_motion(tag, 32, 17);
    const auto b = gen_motion(tag, 32, 17);
    EXPECT_EQ(a.joints.as_tensor(), b.joints.as_tensor());
    const auto c = gen_motion(tag, 32, 18);
    EXPECT_NE(a.joints.as_tensor(), c.joints.as_tensor());
  }
}

TEST(GenMotion, BoneLengthsConstant) {
  const auto sk = motion::humanml3d_skeleton();
  for (auto tag : kAllTags) {
    const auto g = gen_motion(tag, 48, 2, sk);
    for (std::size_t j = 1; j < motion::kJoints; ++j) {
      const double rest = sk.offsets[j].norm();
      for (const auto& f : g.joints.frames) EXPECT_NEAR((f[j] - f[sk.parents[j]]).norm(), rest, 1e-9);
    }
  }
}

TEST(GenMotion, WalkRootSpeedMatchesConfiguredSpeed) {
  const MotionClass c = sample_class(MotionTag::Walk, 6);
  const auto g = gen_motion(c, 40, motion::humanml3d_skeleton());
  for (std::size_t t = 0; t + 1 < 40; ++t) {
    const Vec3 d = g.joints.at(t + 1, 0) - g.joints.at(t, 0);
    EXPECT_NEAR(std::hypot(d.x(), d.z()) * motion::kFps, c.speed, 1e-6);
  }
}

TEST(GenMotion, RejectsShortSequencesAndBadFrequency) {
  EXPECT_THROW(gen_motion(MotionTag::Walk, 8, 0), InvalidArgument);
  MotionClass c;
  c.frequency = 10.0;
  EXPECT_THROW(gen_motion(c, 32, motion::humanml3d_skeleton()), InvalidArgument);
}

TEST(GenMotion, WaveWristDominantFrequency) {
  const std::size_t T = 200;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const MotionClass c = sample_class(MotionTag::Wave, seed);
    const auto g = gen_motion(c, T, motion::humanml3d_skeleton());
    std::vector<double> x(T);
    double mean = 0;
    for (std::size_t t = 0; t < T; ++t) mean += (x[t] = g.joints.at(t, motion::kRightWrist).x()) / T;  // lateral sweep
    for (auto& v : x) v -= mean;
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> spec;
    fft.fwd(spec, x);
    std::size_t best = 1;
    for (std::size_t k = 1; k <= T / 2; ++k) {
      if (std::abs(spec[k]) > std::abs(spec[best])) best = k;
    }
    const double bin_hz = motion::kFps / T;
    EXPECT_LE(std::abs(best * bin_hz - c.frequency), bin_hz) << "seed " << seed;
  }
}

TEST(GenMotion, ClassesSeparableByNearestCentroid) {
  const auto sk = motion::humanml3d_skeleton();
  std::map<MotionTag, std::vector<std::vector<double>>> feats;
  for (auto tag : kAllTags) {
    for (std::uint64_t s = 0; s < 100; ++s) {
      const auto g = gen_motion(tag, 32, 1000 + s, sk);
      const Tensor m = motion::encode_repr(g.joints, &g.rotations, sk);
      std::vector<double> mean(motion::kReprDim, 0.0);
      for (std::size_t t = 0; t < m.rows(); ++t) {
        for (std::size_t c = 0; c < motion::kReprDim; ++c) mean[c] += m.at(t, c) / m.rows();
      }
      feats[tag].push_back(mean);
    }
  }
  std::map<MotionTag, std::vector<double>> centroid;
  for (auto& [tag, v] : feats) {
    centroid[tag].assign(motion::kReprDim, 0.0);
    for (auto& f : v) {
      for (std::size_t c = 0; c < motion::kReprDim; ++c) centroid[tag][c] += f[c] / v.size();
    }
  }
  int correct = 0;
  for (auto& [tag, v] : feats) {
    for (auto& f : v) {
      MotionTag best = tag;
      double bd = 1e300;
      for (auto& [ct, cv] : centroid) {
        double d = 0;
        for (std::size_t c = 0; c < motion::kReprDim; ++c) d += (f[c] - cv[c]) * (f[c] - cv[c]);
        if (d < bd) bd = d, best = ct;
      }
      correct += best == tag;
    }
  }
  EXPECT_EQ(correct, 300);
}

TEST(FeatureMap, PeakAtJointPixel) {
  Tensor j2({22, 2});
  for (std::size_t j = 0; j < 22; ++j) {
    j2.at(j, 0) = 2.0 + 0.5 * (j % 20);
    j2.at(j, 1) = 3.0 + 0.25 * j;
  }
  const FeatureMap fm = render_feature_map(j2, 32, 16, 16, 1.5);
  for (std::size_t c = 0; c < 32; ++c) {
    const std::size_t j = c % 22;
    const auto x = static_cast<std::size_t>(std::lround(j2.at(j, 0)));
    const auto y = static_cast<std::size_t>(std::lround(j2.at(j, 1)));
    // Nearest pixel is within half a pixel per axis of the center.
    const double dx = x - j2.at(j, 0), dy = y - j2.at(j, 1);
    EXPECT_NEAR(fm.at(c, y, x), std::exp(-(dx * dx + dy * dy) / (2 * 1.5 * 1.5)), 1e-15);
  }
  // Joints placed exactly on pixel centers.
  for (std::size_t j = 0; j < 22; ++j) {
    j2.at(j, 0) = static_cast<double>(2 + j % 10);
    j2.at(j, 1) = static_cast<double>(3 + j % 7);
  }
  const FeatureMap on_grid = render_feature_map(j2, 22, 16, 16, 1.5);
  for (std::size_t c = 0; c < 22; ++c) {
    EXPECT_NEAR(on_grid.at(c, 3 + c % 7, 2 + c % 10), 1.0, 5e-3);
  }
}

TEST(FeatureMap, DecaysFarFromJoints) {
  Tensor j2({22, 2});
  for (std::size_t j = 0; j < 22; ++j) j2.at(j, 0) = j2.at(j, 1) = 1.0;
  const double sigma = 1.0;
  const FeatureMap fm = render_feature_map(j2, 22, 16, 16, sigma);
  for (std::size_t c = 0; c < 22; ++c) {
    for (std::size_t y = 0; y < 16; ++y) {
      for (std::size_t x = 0; x < 16; ++x) {
        if (std::hypot(x - 1.0, y - 1.0) > 6 * sigma) {
          EXPECT_LT(fm.at(c, y, x), 1e-6);
        }
      }
    }
  }
}

TEST(FeatureMap, ArgmaxFollowsTranslation) {
  Tensor j2({22, 2});
  for (std::size_t j = 0; j < 22; ++j) {
    j2.at(j, 0) = 4 + (j % 5);
    j2.at(j, 1) = 5 + (j % 3);
  }
  Tensor moved = j2;
  for (auto& v : moved.values()) v += 3.0;
  const FeatureMap a = render_feature_map(j2, 22, 20, 20, 1.2);
  const FeatureMap b = render_feature_map(moved, 22, 20, 20, 1.2);
  auto argmax = [](const FeatureMap& fm, std::size_t c) {
    std::pair<std::size_t, std::size_t> best{0, 0};
    for (std::size_t y = 0; y < fm.height; ++y) {
      for (std::size_t x = 0; x < fm.width; ++x) {
        if (fm.at(c, y, x) > fm.at(c, best.first, best.second)) best = {y, x};
      }
    }
    return best;
  };
  for (std::size_t c = 0; c < 22; ++c) {
    const auto pa = argmax(a, c), pb = argmax(b, c);
    EXPECT_EQ(pb.first, pa.first + 3);
    EXPECT_EQ(pb.second, pa.second + 3);
  }
  EXPECT_EQ(render_feature_map(j2, 22, 20, 20, 1.2).values, a.values);
  EXPECT_THROW(render_feature_map(j2, 22, 20, 20, 0.0), InvalidArgument);
}

TEST(Corpus, ByteIdenticalAndCounted) {
  const auto base = std::filesystem::temp_directory_path() / "mlat_corpus_test";
  std::filesystem::remove_all(base);
  CorpusSpec spec;
  spec.per_class = 4;
  spec.frames = 20;
  spec.seed = 3;
  gen_corpus(base / "a", spec, "abc");
  gen_corpus(base / "b", spec, "abc");
  const auto entries = read_manifest(base / "a");
  ASSERT_EQ(entries.size(), 12u);
  std::map<MotionTag, int> counts;
  for (const auto& e : entries) {
    ++counts[e.tag];
    auto slurp = [](const std::filesystem::path& p) {
      std::ifstream f(p, std::ios::binary);
      return std::string((std::istreambuf_iterator<char>(f)), {});
    };
    EXPECT_EQ(slurp(entry_path(base / "a", e)), slurp(entry_path(base / "b", e)));
  }
  for (auto tag : kAllTags) EXPECT_EQ(counts[tag], 4);
  std::ifstream m(base / "a" / "manifest.csv");
  std::string first;
  std::getline(m, first);
  EXPECT_EQ(first, "# config_hash: abc");
}
