#pragma once

// Whole-run orchestration: corpus, the three training stages, then every evaluation, gathered
// into <out>/metrics.csv.

#include <array>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mlat/pipeline/config.hpp"
#include "mlat/pipeline/evaluation.hpp"
#include "mlat/pipeline/sampling.hpp"
#include "mlat/pipeline/stages.hpp"

namespace mlat::pipeline {

/// Layout from "T2,M3,I1": modality letter (T text, I image, M motion) and span length.
inline backbone::SegmentLayout parse_layout(const std::string& spec) {
  std::vector<std::pair<backbone::Modality, std::size_t>> parts;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.size() < 2) throw ConfigError("layout: malformed span '" + item + "'");
    backbone::Modality m;
    switch (item[0]) {
      case 'T': case 't': m = backbone::Modality::Text; break;
      case 'I': case 'i': m = backbone::Modality::Image; break;
      case 'M': case 'm': m = backbone::Modality::Motion; break;
      default: throw ConfigError("layout: unknown modality '" + item.substr(0, 1) + "'");
    }
    std::size_t n = 0;
    try {
      std::size_t used = 0;
      n = std::stoul(item.substr(1), &used);
      if (used != item.size() - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError("layout: malformed span '" + item + "'");
    }
    if (n == 0) throw ConfigError("layout: empty span '" + item + "'");
    parts.emplace_back(m, n);
  }
  if (parts.empty()) throw ConfigError("layout: no spans");
  return backbone::SegmentLayout::of(parts);
}

/// L x L mask as 0/1 CSV, 1 where attention is allowed.
inline void write_mask_csv(std::ostream& os, const Tensor& mask) {
  for (std::size_t i = 0; i < mask.rows(); ++i) {
    for (std::size_t j = 0; j < mask.cols(); ++j) os << (j ? "," : "") << (mask.at(i, j) == backbone::kBlocked ? 0 : 1);
    os << '\n';
  }
}

/// One named column of a loss CSV, in step order.
inline std::vector<double> read_loss_column(const std::filesystem::path& path, const std::string& column) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot read '" + path.string() + "'");
  std::string line;
  std::ptrdiff_t col = -1;
  std::vector<double> out;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (col < 0) {
      const auto it = std::find(cells.begin(), cells.end(), column);
      if (it == cells.end()) throw FormatError(path.string() + ": no column '" + column + "'");
      col = it - cells.begin();
      continue;
    }
    const auto& v = cells.at(static_cast<std::size_t>(col));
    out.push_back(v.empty() ? std::nan("") : std::stod(v));
  }
  return out;
}

struct RunSummary {
  std::vector<metrics::MetricRow> rows;
  EvalResult recon;
  lra::ShuffleReport probe;
  GenerationReport generation;
  std::array<double, 3> stage_seconds{};  // vae, lra, flow; 0 when a checkpoint was reused
  double total_seconds = 0.0;
};

/// Stages whose checkpoints already exist are reused unless `retrain` is set.
inline RunSummary run_all(const RunConfig& c, std::ostream* log = nullptr, bool retrain = true) {
  namespace fs = std::filesystem;
  using clock = std::chrono::steady_clock;
  const auto since = [](clock::time_point t0) { return std::chrono::duration<double>(clock::now() - t0).count(); };
  const auto start = clock::now();
  const fs::path out = c.out_dir;
  fs::create_directories(out);
  const std::string hash = config_hash(c);
  if (!fs::exists(fs::path(c.corpus_path()) / "manifest.csv")) write_corpus(c);
  StageOptions opt;
  opt.log = log;
  RunSummary r;
  for (Stage s : {Stage::Vae, Stage::Lra, Stage::Flow}) {
    if (!retrain && fs::exists(checkpoint_path(c, s))) continue;
    const auto t0 = clock::now();
    train_stage(c, s, opt);
    r.stage_seconds[static_cast<std::size_t>(s)] = since(t0);
  }
  auto& rows = r.rows;

  fs::remove_all(out / "recon");
  fs::remove_all(out / "samples");
  cmd_reconstruct(c, out / "recon");
  r.recon = evaluate_dirs(out / "recon", c.corpus_path());
  write_eval(out / "eval_recon", hash, r.recon);
  for (const auto& row : r.recon.rows) {
    if (row.scope == "all") rows.push_back({"recon_" + row.metric, "heldout", row.value, row.units});
  }
  const auto kl = read_loss_column(loss_log_path(c, Stage::Vae), "kl_phi");
  rows.push_back({"vae_min_kl_phi", "train", *std::min_element(kl.begin(), kl.end()), "nats"});
  const auto recon_loss = read_loss_column(loss_log_path(c, Stage::Vae), "recon");
  rows.push_back({"vae_final_recon", "train", recon_loss.back(), "smooth_l1"});

  const GeneratorModel lra_gen = load_generator(c, Stage::Lra, Stage::Lra);
  r.probe = lra_probe(c, lra_gen.store);
  rows.push_back({"lra_matched_err", "heldout", r.probe.matched_err, "mse"});
  rows.push_back({"lra_shuffled_err", "heldout", r.probe.shuffled_err, "mse"});
  rows.push_back({"lra_shuffle_ratio", "heldout", r.probe.ratio, "ratio"});
  rows.push_back({"lra_frechet_matched", "heldout", r.probe.frechet_matched, "latent"});
  rows.push_back({"lra_frechet_shuffled", "heldout", r.probe.frechet_shuffled, "latent"});

  const VaeModel vae = load_vae(c, Stage::Flow);
  const GeneratorModel gen = load_generator(c, Stage::Flow, Stage::Flow);
  std::vector<std::size_t> all(c.classes.size());
  for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
  const auto labels = sample_labels(all, c.sample.per_class);
  const auto samples = decode_latents(vae, gen.latent_stats, sample_latents(gen, c, labels, c.seed));
  write_samples(out / "samples", c, labels, samples, c.seed);
  const auto baseline = decode_latents(vae, gen.latent_stats, sample_latents(untrained_generator(c, gen), c, labels, c.seed));
  r.generation = generation_report(c, load_corpus(c), labels, samples, baseline);
  const auto& g = r.generation;
  rows.push_back({"gen_accuracy", "all", g.accuracy, "fraction"});
  for (std::size_t k = 0; k < c.classes.size(); ++k) {
    rows.push_back({"gen_frechet", c.classes[k], g.frechet[k], "feature"});
    rows.push_back({"gen_frechet_untrained", c.classes[k], g.frechet_baseline[k], "feature"});
  }
  rows.push_back({"gen_frechet", "mean", g.frechet_mean, "feature"});
  rows.push_back({"gen_frechet_untrained", "mean", g.frechet_baseline_mean, "feature"});
  rows.push_back({"gen_frechet_improvement", "mean", g.improvement(), "ratio"});
  write_metrics(out / "metrics.csv", hash, rows);
  r.total_seconds = since(start);
  if (log) {
    *log << "recon mpjpe " << r.recon.rows[1].value << " m, lra ratio " << r.probe.ratio << ", gen accuracy " << g.accuracy
         << ", frechet improvement " << g.improvement() << std::endl;
  }
  return r;
}

}  // namespace mlat::pipeline
