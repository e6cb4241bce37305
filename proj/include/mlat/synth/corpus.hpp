#pragma once

// corpus/<class>/<seed>.m269 plus manifest.csv (class,seed,frames per line).

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mlat/motion/io.hpp"
#include "mlat/synth/generator.hpp"

namespace mlat::synth {

struct CorpusSpec {
  std::vector<MotionTag> classes{kAllTags.begin(), kAllTags.end()};
  std::size_t per_class = 100;
  std::size_t frames = 32;
  std::uint64_t seed = 0;
};

struct CorpusEntry {
  MotionTag tag;
  std::uint64_t seed;
  std::size_t frames;
};

/// Entries in manifest order: classes interleaved so any prefix is class-balanced.
inline std::vector<CorpusEntry> corpus_entries(const CorpusSpec& spec) {
  std::vector<CorpusEntry> out;
  for (std::size_t i = 0; i < spec.per_class; ++i) {
    for (std::size_t c = 0; c < spec.classes.size(); ++c) {
      const std::uint64_t s = spec.seed * 100000 + i * spec.classes.size() + c;
      out.push_back({spec.classes[c], s, spec.frames});
    }
  }
  return out;
}

inline Tensor entry_repr(const CorpusEntry& e, const motion::Skeleton& sk) {
  const auto g = gen_motion(sample_class(e.tag, e.seed), e.frames, sk);
  return motion::encode_repr(g.joints, &g.rotations, sk);
}

inline std::filesystem::path entry_path(const std::filesystem::path& root, const CorpusEntry& e) {
  return root / tag_name(e.tag) / (std::to_string(e.seed) + ".m269");
}

inline void write_manifest(const std::filesystem::path& root, const std::vector<CorpusEntry>& entries,
                           const std::string& config_hash = "") {
  std::ofstream f(root / "manifest.csv", std::ios::trunc);
  if (!f) throw FormatError("cannot write manifest in '" + root.string() + "'");
  if (!config_hash.empty()) f << "# config_hash: " << config_hash << '\n';
  f << "class,seed,frames\n";
  for (const auto& e : entries) f << tag_name(e.tag) << ',' << e.seed << ',' << e.frames << '\n';
}

inline std::vector<CorpusEntry> read_manifest(const std::filesystem::path& root) {
  std::ifstream f(root / "manifest.csv");
  if (!f) throw FormatError("no manifest.csv in '" + root.string() + "'");
  std::vector<CorpusEntry> out;
  std::string line;
  bool header = false;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != "class,seed,frames") throw FormatError("manifest: unexpected header '" + line + "'");
      header = true;
      continue;
    }
    std::istringstream ls(line);
    std::string cls, seed, frames;
    if (!std::getline(ls, cls, ',') || !std::getline(ls, seed, ',') || !std::getline(ls, frames)) {
      throw FormatError("manifest: malformed line '" + line + "'");
    }
    out.push_back({parse_tag(cls), std::stoull(seed), std::stoull(frames)});
  }
  return out;
}

inline std::vector<CorpusEntry> gen_corpus(const std::filesystem::path& root, const CorpusSpec& spec,
                                           const std::string& config_hash = "",
                                           const motion::Skeleton& sk = motion::humanml3d_skeleton()) {
  const auto entries = corpus_entries(spec);
  for (auto tag : spec.classes) std::filesystem::create_directories(root / tag_name(tag));
  for (const auto& e : entries) motion::write_m269(entry_path(root, e).string(), entry_repr(e, sk));
  write_manifest(root, entries, config_hash);
  return entries;
}

}  // namespace mlat::synth
