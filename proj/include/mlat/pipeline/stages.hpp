#pragma once

// Staged training: vae, then lra (stage 0), then class-conditional flow. Each stage owns a
// checkpoint and a per-step loss CSV and can be resumed from its own checkpoint.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mlat/core/parallel.hpp"
#include "mlat/diff/checkpoint.hpp"
#include "mlat/motion/standardize.hpp"
#include "mlat/pipeline/config.hpp"

namespace mlat::pipeline {

namespace fs = std::filesystem;

enum class Stage { Vae, Lra, Flow };

inline std::string stage_name(Stage s) {
  switch (s) {
    case Stage::Vae: return "vae";
    case Stage::Lra: return "lra";
    case Stage::Flow: return "flow";
  }
  return "?";
}

inline Stage parse_stage(const std::string& s) {
  if (s == "vae") return Stage::Vae;
  if (s == "lra" || s == "stage0") return Stage::Lra;
  if (s == "flow" || s == "stage1") return Stage::Flow;
  throw ConfigError("unknown stage '" + s + "' (expected vae, lra or flow)");
}

inline fs::path checkpoint_path(const RunConfig& c, Stage s) { return fs::path(c.out_dir) / (stage_name(s) + ".ckpt"); }
inline fs::path loss_log_path(const RunConfig& c, Stage s) { return fs::path(c.out_dir) / (stage_name(s) + "_loss.csv"); }

// Rng stream bases; step k of a stage draws from Rng(seed, base + k).
inline constexpr std::uint64_t kVaeStream = 1ULL << 32;
inline constexpr std::uint64_t kLraStream = 2ULL << 32;
inline constexpr std::uint64_t kFlowStream = 3ULL << 32;
inline constexpr std::uint64_t kInitStream = 4ULL << 32;
inline constexpr std::uint64_t kSampleStream = 5ULL << 32;
inline constexpr std::uint64_t kProbeStream = 6ULL << 32;

// ---------------------------------------------------------------------------------------------
// Corpus

struct Corpus {
  std::vector<synth::CorpusEntry> entries;
  std::vector<Tensor> reprs;
  std::vector<std::size_t> train, heldout;  // indices into entries
  std::vector<std::size_t> labels;          // class index per entry, in config order
};

inline std::size_t class_index(const RunConfig& c, synth::MotionTag tag) {
  for (std::size_t i = 0; i < c.classes.size(); ++i) {
    if (c.classes[i] == synth::tag_name(tag)) return i;
  }
  throw ConfigError("class '" + synth::tag_name(tag) + "' is not in the config");
}

/// Held-out entries are the trailing ceil(holdout * per_class) rows of every class.
inline std::size_t heldout_per_class(const RunConfig& c) {
  return std::min(c.per_class - 1, static_cast<std::size_t>(std::ceil(c.holdout * static_cast<double>(c.per_class) - 1e-9)));
}

inline Corpus load_corpus(const RunConfig& c) {
  const fs::path root = c.corpus_path();
  if (!fs::exists(root / "manifest.csv")) {
    throw PrerequisiteError("no corpus at '" + root.string() + "': run gen-corpus first");
  }
  Corpus out;
  out.entries = synth::read_manifest(root);
  const auto expected = synth::corpus_entries(corpus_spec(c));
  bool same = expected.size() == out.entries.size();
  for (std::size_t i = 0; same && i < expected.size(); ++i) {
    same = expected[i].tag == out.entries[i].tag && expected[i].seed == out.entries[i].seed && expected[i].frames == out.entries[i].frames;
  }
  if (!same) throw ConfigError("corpus at '" + root.string() + "' was generated from a different config; rerun gen-corpus");
  const std::size_t held = heldout_per_class(c);
  const std::size_t first_held = (c.per_class - held) * c.classes.size();
  for (std::size_t i = 0; i < out.entries.size(); ++i) {
    out.reprs.push_back(motion::read_m269(synth::entry_path(root, out.entries[i]).string()));
    if (out.reprs.back().rows() != c.frames) throw FormatError("corpus: unexpected frame count in entry " + std::to_string(i));
    out.labels.push_back(class_index(c, out.entries[i].tag));
    (i < first_held ? out.train : out.heldout).push_back(i);
  }
  return out;
}

inline void write_corpus(const RunConfig& c) {
  synth::gen_corpus(c.corpus_path(), corpus_spec(c), config_hash(c));
}

// ---------------------------------------------------------------------------------------------
// Shared training loop

struct StageOptions {
  std::string resume;                       // checkpoint to continue from
  std::optional<std::size_t> stop_after;    // stop (and checkpoint) once this step is done
  std::size_t checkpoint_every = 250;
  std::ostream* log = nullptr;
};

inline double scheduled_lr(const TrainSettings& ts, std::uint64_t step) {
  double lr = ts.lr;
  if (ts.cosine && ts.steps > 0) {
    lr *= 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step - 1) / static_cast<double>(ts.steps)));
  }
  return warmup_lr(lr, step, ts.warmup);
}

/// Opens the loss CSV. A fresh run truncates it; a resumed run keeps rows up to `resume_step`.
inline std::ofstream open_loss_log(const fs::path& path, const std::string& hash, const std::string& header,
                                   std::uint64_t resume_step) {
  std::vector<std::string> keep;
  if (resume_step > 0 && fs::exists(path)) {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (line[0] == '#' || line == header) {
        keep.push_back(line);
        continue;
      }
      const auto comma = line.find(',');
      if (std::stoull(line.substr(0, comma)) <= resume_step) keep.push_back(line);
    }
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  if (keep.empty()) {
    out << "# config_hash: " << hash << '\n' << header << '\n';
  } else {
    for (const auto& l : keep) out << l << '\n';
  }
  out.precision(17);
  return out;
}

struct StepResult {
  Expr total;
  std::vector<std::optional<Expr>> columns;  // logged after `step`, before `total`
};

using StepFn = std::function<StepResult(const nn::Scope& root, std::uint64_t step)>;

inline std::map<std::string, std::string> stage_meta(const RunConfig& c, Stage s, std::uint64_t step) {
  return {{"config_hash", config_hash(c)}, {"stage", stage_name(s)}, {"step", std::to_string(step)}};
}

/// Runs optimizer steps start+1 .. steps on `trainable`, logging one CSV row per step.
inline void train_loop(ParamStore& store, const RunConfig& c, Stage stage, const TrainSettings& ts,
                       const std::vector<std::string>& trainable, const std::string& columns, const StepFn& fn,
                       const StageOptions& opt, std::uint64_t start) {
  const std::string hash = config_hash(c);
  std::ofstream csv = open_loss_log(loss_log_path(c, stage), hash, "step," + columns + ",total", start);
  const std::uint64_t last = std::min<std::uint64_t>(ts.steps, opt.stop_after.value_or(ts.steps));
  const fs::path ckpt = checkpoint_path(c, stage);
  for (std::uint64_t step = start + 1; step <= last; ++step) {
    const StepResult r = fn(nn::Scope(static_cast<const ParamStore&>(store)), step);
    Evaluator ev(store);
    Gradients g = ev.gradient(r.total, trainable);
    csv << step;
    for (const auto& col : r.columns) {
      csv << ',';
      if (col) csv << ev.value(*col).item();
    }
    csv << ',' << g.value << '\n';
    if (!std::isfinite(g.value)) {
      csv.flush();
      throw NumericalError(stage_name(stage) + ": non-finite loss at step " + std::to_string(step));
    }
    clip_grad_norm(g.grads, ts.clip);
    adamw_step(store, g.grads, scheduled_lr(ts, step));
    if (opt.log && (step % 100 == 0 || step == last)) {
      *opt.log << stage_name(stage) << " step " << step << '/' << ts.steps << " loss " << g.value << std::endl;
    }
    if (step % opt.checkpoint_every == 0 || step == last) {
      csv.flush();
      save_checkpoint(ckpt.string(), store, stage_meta(c, stage, step));
    }
  }
  if (start >= last) save_checkpoint(ckpt.string(), store, stage_meta(c, stage, start));
}

inline Checkpoint load_stage_checkpoint(const fs::path& path, Stage stage) {
  if (!fs::exists(path)) throw PrerequisiteError("missing checkpoint '" + path.string() + "' of stage '" + stage_name(stage) + "'");
  Checkpoint ck = load_checkpoint(path.string());
  const auto it = ck.meta.find("stage");
  if (it == ck.meta.end() || it->second != stage_name(stage)) {
    throw PrerequisiteError("checkpoint '" + path.string() + "' does not belong to stage '" + stage_name(stage) + "'");
  }
  return ck;
}

/// Loads the stage's own checkpoint for --resume. Returns the step it was written at.
inline std::uint64_t resume_into(ParamStore& store, const RunConfig& c, Stage stage, const std::string& path) {
  Checkpoint ck = load_stage_checkpoint(path, stage);
  if (ck.meta["config_hash"] != config_hash(c)) {
    throw ConfigError("cannot resume '" + path + "': written with config " + ck.meta["config_hash"] + ", current config is " +
                      config_hash(c));
  }
  store = std::move(ck.store);
  return std::stoull(ck.meta["step"]);
}

inline Checkpoint require_stage(const RunConfig& c, Stage needed, Stage by) {
  const fs::path p = checkpoint_path(c, needed);
  if (!fs::exists(p)) {
    throw PrerequisiteError("stage '" + stage_name(by) + "' requires a trained '" + stage_name(needed) + "' stage (missing " +
                            p.string() + ")");
  }
  return load_stage_checkpoint(p, needed);
}

/// Drops optimizer moments and the step counter so a new stage starts its own schedule.
inline void reset_optimizer(ParamStore& store) {
  store.first_moments().clear();
  store.second_moments().clear();
  store.set_step(0);
}

// ---------------------------------------------------------------------------------------------
// VAE

inline const char* kMotionStats = "stats/motion";
inline const char* kLatentStats = "stats/latent";

struct VaeModel {
  ParamStore store;
  vae::VaeConfig cfg;
  motion::Standardizer stats;

  /// Posterior mean of a raw (unstandardized) representation.
  Tensor encode_mean(const Tensor& repr) const {
    const nn::Scope s(store);
    return evaluate(vae::encode_motion(s, constant(stats.apply(repr)), cfg).mean, store);
  }

  Tensor decode(const Tensor& z) const {
    const nn::Scope s(store);
    return stats.invert(evaluate(vae::decode_motion(s, constant(z), cfg), store));
  }
};

inline VaeModel load_vae(const RunConfig& c, Stage by) {
  Checkpoint ck = require_stage(c, Stage::Vae, by);
  VaeModel m;
  m.store = std::move(ck.store);
  m.cfg = vae_config(c);
  m.stats = motion::Standardizer::unpack(m.store.get(kMotionStats));
  return m;
}

inline vae::ImageInput paired_image(const Tensor& repr, const vae::VaeConfig& cfg) {
  const auto joints = motion::recover_joints(repr);
  const Tensor j2 = synth::frame_joints2d(joints.frames.front(), cfg.image);
  const auto& img = cfg.image;
  return {synth::render_feature_map(j2, img.channels, img.height, img.width, img.sigma), j2};
}

inline void train_vae(const RunConfig& c, const StageOptions& opt = {}) {
  const Corpus corpus = load_corpus(c);
  const vae::VaeConfig vc = vae_config(c);
  std::vector<Tensor> train_raw;
  for (std::size_t i : corpus.train) train_raw.push_back(corpus.reprs[i]);
  const motion::Standardizer st = motion::Standardizer::fit(train_raw, c.std_floor);

  std::vector<vae::VaeSample> samples;
  const auto paired = static_cast<std::size_t>(std::round(c.paired_fraction * static_cast<double>(train_raw.size())));
  for (std::size_t i = 0; i < train_raw.size(); ++i) {
    vae::VaeSample s{st.apply(train_raw[i]), std::nullopt};
    if (i < paired) s.image = paired_image(train_raw[i], vc);
    samples.push_back(std::move(s));
  }

  ParamStore store;
  std::uint64_t start = 0;
  if (!opt.resume.empty()) {
    start = resume_into(store, c, Stage::Vae, opt.resume);
  } else {
    Rng init(c.seed, kInitStream);
    vae::init_vae(store, vc, init);
    store.set(kMotionStats, st.pack());
  }
  const auto trainable = store.names_with_prefix({"vae/"});
  const StepFn fn = [&](const nn::Scope& root, std::uint64_t step) {
    Rng rng(c.seed, kVaeStream + step);
    std::vector<vae::VaeSample> batch;
    for (std::size_t b = 0; b < c.vae_train.batch; ++b) batch.push_back(samples[rng.index(samples.size())]);
    const vae::LossTerms t = vae::vae_loss(root, batch, vc, step, rng);
    return StepResult{t.total, {t.recon, t.kl_phi, t.kl_psi, t.align, t.joint}};
  };
  train_loop(store, c, Stage::Vae, c.vae_train, trainable, "recon,kl_phi,kl_psi,align,joint", fn, opt, start);
}

// ---------------------------------------------------------------------------------------------
// Generator (lra and flow stages)

struct Latents {
  std::vector<Tensor> train, heldout;  // standardized posterior means
  std::vector<std::size_t> train_labels, heldout_labels;
  motion::Standardizer stats;
};

/// Posterior means of the corpus, standardized per latent channel with statistics of the
/// training split (or `stats` when given).
inline Latents corpus_latents(const VaeModel& vae, const Corpus& corpus, const std::optional<motion::Standardizer>& stats = {}) {
  Latents out;
  std::vector<Tensor> raw(corpus.entries.size());
  parallel_for(raw.size(), [&](std::size_t i) { raw[i] = vae.encode_mean(corpus.reprs[i]); });
  std::vector<Tensor> train_raw;
  for (std::size_t i : corpus.train) train_raw.push_back(raw[i]);
  out.stats = stats ? *stats : motion::Standardizer::fit(train_raw, 1e-6);
  for (std::size_t i : corpus.train) {
    out.train.push_back(out.stats.apply(raw[i]));
    out.train_labels.push_back(corpus.labels[i]);
  }
  for (std::size_t i : corpus.heldout) {
    out.heldout.push_back(out.stats.apply(raw[i]));
    out.heldout_labels.push_back(corpus.labels[i]);
  }
  return out;
}

/// Class token as a one-token text span through the backbone: 1 x d_h.
inline Expr class_condition(const nn::Scope& root, std::size_t cls, std::size_t classes, const lra::GeneratorConfig& g) {
  Tensor onehot({1, classes});
  onehot.at(0, cls) = 1.0;
  const Expr token = matmul(constant(onehot), root.sub("flow").param("class_embed", {classes, g.embed.hidden}, nn::Init::Fan));
  const auto layout = backbone::SegmentLayout::of({{backbone::Modality::Text, 1}});
  return backbone::backbone_forward(root, token, layout, g.backbone);
}

/// Declares every generator parameter used by the lra and flow stages.
inline void init_generator(ParamStore& store, const RunConfig& c, Rng& rng) {
  const vae::VaeConfig vc = vae_config(c);
  const lra::GeneratorConfig& g = c.generator;
  nn::Scope root(store, rng);
  root.sub("lra").param("mask_token", {1, vc.latent_dim}, nn::Init::Fan);
  lra::lra_step(root, Tensor({vc.tokens(), vc.latent_dim}), rng, g);
  class_condition(root, 0, c.classes.size(), g);
  flow::null_condition(root, 1, g.embed.hidden);
}

inline bool is_backbone_base(const std::string& name) {
  return name.rfind("backbone/", 0) == 0 && !backbone::is_lora_param(name, false) && !backbone::is_lora_param(name, true);
}

inline std::vector<std::string> lra_trainable_names(const ParamStore& store, const RunConfig& c) {
  std::vector<std::string> out;
  for (const auto& n : store.names()) {
    if (lra::lra_trainable(n) || (c.train_base && is_backbone_base(n))) out.push_back(n);
  }
  return out;
}

/// Flow stage: flow head, class embedding, null condition and text-branch adapters.
inline std::vector<std::string> flow_trainable_names(const ParamStore& store, const RunConfig& c) {
  std::vector<std::string> out;
  for (const auto& n : store.names()) {
    const bool adapter = n.rfind("backbone/", 0) == 0 && backbone::is_lora_param(n, false);
    if (n.rfind("flow/", 0) == 0 || adapter || (c.train_base && is_backbone_base(n))) out.push_back(n);
  }
  return out;
}

inline void train_lra(const RunConfig& c, const StageOptions& opt = {}) {
  const VaeModel vae = load_vae(c, Stage::Lra);
  const Latents lat = corpus_latents(vae, load_corpus(c));
  ParamStore store;
  std::uint64_t start = 0;
  if (!opt.resume.empty()) {
    start = resume_into(store, c, Stage::Lra, opt.resume);
  } else {
    Rng init(c.seed, kInitStream + 1);
    init_generator(store, c, init);
    store.set(kLatentStats, lat.stats.pack());
  }
  const auto trainable = lra_trainable_names(store, c);
  const StepFn fn = [&](const nn::Scope& root, std::uint64_t step) {
    Rng rng(c.seed, kLraStream + step);
    std::vector<Tensor> batch;
    for (std::size_t b = 0; b < c.lra_train.batch; ++b) batch.push_back(lat.train[rng.index(lat.train.size())]);
    const Expr loss = lra::lra_loss(root, batch, rng, c.generator);
    return StepResult{loss, {loss}};
  };
  train_loop(store, c, Stage::Lra, c.lra_train, trainable, "lra", fn, opt, start);
}

/// Conditional flow-matching loss of one latent with class `cls`, before lambda_flow.
inline Expr flow_sample_loss(const nn::Scope& root, const Tensor& z, std::size_t cls, std::size_t classes, Rng& rng,
                             const lra::GeneratorConfig& g) {
  const Expr cond = class_condition(root, cls, classes, g);
  const flow::DroppedCondition d = flow::condition_dropout(root, cond, g.flow.cond_dropout, rng);
  const flow::FlowBatch fb = flow::make_flow_batch(z, rng, g.flow);
  const Expr v = flow::flow_head_forward(root, constant(fb.xt), fb.t, d.tokens, g.head);
  return flow::flow_loss(v, constant(fb.ut));
}

inline void train_flow(const RunConfig& c, const StageOptions& opt = {}) {
  const VaeModel vae = load_vae(c, Stage::Flow);
  ParamStore store;
  std::uint64_t start = 0;
  if (!opt.resume.empty()) {
    start = resume_into(store, c, Stage::Flow, opt.resume);
  } else {
    store = require_stage(c, Stage::Lra, Stage::Flow).store;
    reset_optimizer(store);
  }
  const Latents lat = corpus_latents(vae, load_corpus(c), motion::Standardizer::unpack(store.get(kLatentStats)));
  const auto trainable = flow_trainable_names(store, c);
  const std::size_t classes = c.classes.size();
  const StepFn fn = [&](const nn::Scope& root, std::uint64_t step) {
    Rng rng(c.seed, kFlowStream + step);
    Expr total;
    for (std::size_t b = 0; b < c.flow_train.batch; ++b) {
      const std::size_t k = rng.index(lat.train.size());
      const Expr l = flow_sample_loss(root, lat.train[k], lat.train_labels[k], classes, rng, c.generator);
      total = b == 0 ? l : add(total, l);
    }
    const Expr mean = scale(total, 1.0 / static_cast<double>(c.flow_train.batch));
    return StepResult{scale(mean, c.generator.flow.lambda_flow), {mean}};
  };
  train_loop(store, c, Stage::Flow, c.flow_train, trainable, "flow", fn, opt, start);
}

inline void train_stage(const RunConfig& c, Stage s, const StageOptions& opt = {}) {
  fs::create_directories(c.out_dir);
  switch (s) {
    case Stage::Vae: train_vae(c, opt); break;
    case Stage::Lra: train_lra(c, opt); break;
    case Stage::Flow: train_flow(c, opt); break;
  }
}

}  // namespace mlat::pipeline
