#pragma once

// Class-conditional sampling, VAE reconstruction of the held-out split, the shuffled-condition
// probe, and the generation report (nearest-centroid accuracy and per-class Frechet distance).

#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "mlat/pipeline/evaluation.hpp"
#include "mlat/pipeline/stages.hpp"

namespace mlat::pipeline {

struct GeneratorModel {
  ParamStore store;
  motion::Standardizer latent_stats;
};

inline GeneratorModel load_generator(const RunConfig& c, Stage stage, Stage by) {
  Checkpoint ck = require_stage(c, stage, by);
  GeneratorModel g{std::move(ck.store), {}};
  g.latent_stats = motion::Standardizer::unpack(g.store.get(kLatentStats));
  return g;
}

/// A generator as it stands before any training, sharing `trained`'s latent statistics.
inline GeneratorModel untrained_generator(const RunConfig& c, const GeneratorModel& trained) {
  GeneratorModel g;
  Rng init(c.seed, kInitStream + 1);
  init_generator(g.store, c, init);
  g.latent_stats = trained.latent_stats;
  return g;
}

/// Guided Euler chains, one per label; chain i starts from Rng(seed, kSampleStream + i).
/// Returns standardized latents.
inline std::vector<Tensor> sample_latents(const GeneratorModel& g, const RunConfig& c, const std::vector<std::size_t>& labels,
                                          std::uint64_t seed) {
  const vae::VaeConfig vc = vae_config(c);
  const lra::GeneratorConfig& gc = c.generator;
  const nn::Scope s(g.store);
  std::vector<Tensor> cond;
  for (std::size_t k = 0; k < c.classes.size(); ++k) cond.push_back(evaluate(class_condition(s, k, c.classes.size(), gc), g.store));
  const Tensor null = evaluate(flow::null_condition(s, 1, gc.embed.hidden), g.store);
  std::vector<Tensor> out(labels.size());
  parallel_for(labels.size(), [&](std::size_t i) {
    Rng rng(seed, kSampleStream + i);
    const Tensor x0 = rng.normal_tensor({vc.tokens(), vc.latent_dim});
    const Tensor& hc = cond.at(labels[i]);
    const flow::VelocityFn v = [&](const Tensor& x, double t, bool conditional) {
      return evaluate(flow::flow_head_forward(s, constant(x), t, constant(conditional ? hc : null), gc.head), g.store);
    };
    out[i] = flow::euler_sample(v, x0, gc.flow, true);
  });
  return out;
}

inline std::vector<Tensor> decode_latents(const VaeModel& vae, const motion::Standardizer& latent_stats, const std::vector<Tensor>& z) {
  std::vector<Tensor> out(z.size());
  parallel_for(z.size(), [&](std::size_t i) { out[i] = vae.decode(latent_stats.invert(z[i])); });
  return out;
}

/// Labels for `count` samples of each listed class, class-major.
inline std::vector<std::size_t> sample_labels(const std::vector<std::size_t>& classes, std::size_t count) {
  std::vector<std::size_t> labels;
  for (std::size_t k : classes) labels.insert(labels.end(), count, k);
  return labels;
}

/// Writes <dir>/<class>/<index>.m269 plus manifest.csv (file,class,chain) headed by the
/// config hash and seed.
inline void write_samples(const std::filesystem::path& dir, const RunConfig& c, const std::vector<std::size_t>& labels,
                          const std::vector<Tensor>& reprs, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  std::ofstream m = open_output(dir / "manifest.csv", config_hash(c));
  m << "# seed: " << seed << "\nfile,class,chain\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::string cls = c.classes[labels[i]];
    std::filesystem::create_directories(dir / cls);
    const std::string rel = cls + "/" + std::to_string(i) + ".m269";
    motion::write_m269((dir / rel).string(), reprs[i]);
    m << rel << ',' << cls << ',' << i << '\n';
  }
}

inline std::vector<std::size_t> resolve_classes(const RunConfig& c, const std::string& only) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < c.classes.size(); ++k) {
    if (only.empty() || c.classes[k] == only) out.push_back(k);
  }
  if (out.empty()) throw ConfigError("class '" + only + "' is not in the config");
  return out;
}

inline void cmd_sample(const RunConfig& c, const std::string& only_class, std::size_t count, const std::filesystem::path& dir) {
  const VaeModel vae = load_vae(c, Stage::Flow);
  const GeneratorModel g = load_generator(c, Stage::Flow, Stage::Flow);
  const auto labels = sample_labels(resolve_classes(c, only_class), count);
  const auto reprs = decode_latents(vae, g.latent_stats, sample_latents(g, c, labels, c.seed));
  write_samples(dir, c, labels, reprs, c.seed);
}

/// VAE round trip of the held-out split into <dir>/<class>/<seed>.m269 (corpus layout).
inline void cmd_reconstruct(const RunConfig& c, const std::filesystem::path& dir) {
  const VaeModel vae = load_vae(c, Stage::Vae);
  const Corpus corpus = load_corpus(c);
  std::vector<Tensor> out(corpus.heldout.size());
  parallel_for(out.size(), [&](std::size_t i) {
    const Tensor& x = corpus.reprs[corpus.heldout[i]];
    out[i] = vae.decode(vae.encode_mean(x));
  });
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& e = corpus.entries[corpus.heldout[i]];
    const auto p = synth::entry_path(dir, e);
    std::filesystem::create_directories(p.parent_path());
    motion::write_m269(p.string(), out[i]);
  }
}

/// Shuffled-condition probe of the lra generator on held-out latents.
inline lra::ShuffleReport lra_probe(const RunConfig& c, const ParamStore& store) {
  const VaeModel vae = load_vae(c, Stage::Lra);
  const motion::Standardizer stats = motion::Standardizer::unpack(store.get(kLatentStats));
  const Latents lat = corpus_latents(vae, load_corpus(c), stats);
  return lra::shuffled_condition_eval(store, lat.heldout, c.generator, c.seed + kProbeStream);
}

// ---------------------------------------------------------------------------------------------
// Generation report

/// Per-motion feature: temporal mean and spread of every joint relative to the root, plus mean
/// root height and planar speed, from canonical joints.
inline std::vector<double> motion_features(const Tensor& repr) {
  const auto j = canonical_joints(repr);
  const std::size_t T = j.size();
  std::vector<double> f;
  for (std::size_t k = 1; k < motion::kJoints; ++k) {
    for (int a = 0; a < 3; ++a) {
      double m = 0, q = 0;
      for (std::size_t t = 0; t < T; ++t) m += (j.at(t, k)[a] - j.at(t, 0)[a]) / static_cast<double>(T);
      for (std::size_t t = 0; t < T; ++t) {
        const double d = j.at(t, k)[a] - j.at(t, 0)[a] - m;
        q += d * d / static_cast<double>(T);
      }
      f.push_back(m);
      f.push_back(std::sqrt(q));
    }
  }
  double height = 0, speed = 0;
  for (std::size_t t = 0; t < T; ++t) height += j.at(t, 0)[1] / static_cast<double>(T);
  for (std::size_t t = 0; t + 1 < T; ++t) {
    const double dx = j.at(t + 1, 0)[0] - j.at(t, 0)[0], dz = j.at(t + 1, 0)[2] - j.at(t, 0)[2];
    speed += std::sqrt(dx * dx + dz * dz) * j.fps / static_cast<double>(T - 1);
  }
  f.push_back(height);
  f.push_back(speed);
  return f;
}

inline Tensor feature_matrix(const std::vector<Tensor>& reprs) {
  std::vector<std::vector<double>> rows(reprs.size());
  parallel_for(reprs.size(), [&](std::size_t i) { rows[i] = motion_features(reprs[i]); });
  Tensor out({reprs.size(), rows.front().size()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t k = 0; k < rows[i].size(); ++k) out.at(i, k) = rows[i][k];
  }
  return out;
}

inline Tensor select_rows(const Tensor& m, const std::vector<std::size_t>& labels, std::size_t cls) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == cls) idx.push_back(i);
  }
  Tensor out({idx.size(), m.cols()});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    for (std::size_t k = 0; k < m.cols(); ++k) out.at(r, k) = m.at(idx[r], k);
  }
  return out;
}

/// Index of the centroid closest (Euclidean) to row r of `f`.
inline std::size_t nearest_centroid(const std::vector<std::vector<double>>& centroids, const Tensor& f, std::size_t r) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < centroids.size(); ++k) {
    double d = 0;
    for (std::size_t c = 0; c < f.cols(); ++c) d += (f.at(r, c) - centroids[k][c]) * (f.at(r, c) - centroids[k][c]);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

struct GenerationReport {
  double accuracy = 0.0;
  std::vector<double> frechet, frechet_baseline;  // per class
  double frechet_mean = 0.0, frechet_baseline_mean = 0.0;
  double improvement() const { return frechet_baseline_mean / frechet_mean; }
};

/// Scores generated motions against the real training motions of each class. `baseline`
/// holds samples with the same labels from an untrained generator.
inline GenerationReport generation_report(const RunConfig& c, const Corpus& corpus, const std::vector<std::size_t>& labels,
                                          const std::vector<Tensor>& generated, const std::vector<Tensor>& baseline) {
  std::vector<Tensor> real;
  std::vector<std::size_t> real_labels;
  for (std::size_t i : corpus.train) {
    real.push_back(corpus.reprs[i]);
    real_labels.push_back(corpus.labels[i]);
  }
  const Tensor fr = feature_matrix(real), fg = feature_matrix(generated), fb = feature_matrix(baseline);
  const std::size_t K = c.classes.size();
  std::vector<std::vector<double>> centroids(K, std::vector<double>(fr.cols(), 0.0));
  std::vector<std::size_t> counts(K, 0);
  for (std::size_t i = 0; i < real.size(); ++i) {
    ++counts[real_labels[i]];
    for (std::size_t k = 0; k < fr.cols(); ++k) centroids[real_labels[i]][k] += fr.at(i, k);
  }
  for (std::size_t k = 0; k < K; ++k) {
    for (auto& v : centroids[k]) v /= static_cast<double>(counts[k]);
  }
  GenerationReport r;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += nearest_centroid(centroids, fg, i) == labels[i] ? 1 : 0;
  r.accuracy = static_cast<double>(hits) / static_cast<double>(labels.size());
  for (std::size_t k = 0; k < K; ++k) {
    const Tensor ref = select_rows(fr, real_labels, k);
    r.frechet.push_back(metrics::frechet_gaussian(select_rows(fg, labels, k), ref));
    r.frechet_baseline.push_back(metrics::frechet_gaussian(select_rows(fb, labels, k), ref));
    r.frechet_mean += r.frechet.back() / static_cast<double>(K);
    r.frechet_baseline_mean += r.frechet_baseline.back() / static_cast<double>(K);
  }
  return r;
}

}  // namespace mlat::pipeline
