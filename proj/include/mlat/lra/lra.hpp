#pragma once

// Latent reconstruction pre-training: the generator learns to rebuild a clean latent from noise
// while conditioned only on a degraded copy of that latent, plus the shuffled-condition probe.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mlat/backbone/backbone.hpp"
#include "mlat/flow/flow.hpp"
#include "mlat/metrics/metrics.hpp"

namespace mlat::lra {

struct BottleneckConfig {
  double keep_lo = 0.2;
  double keep_hi = 0.5;
  double dropout = 0.15;
  double sigma = 0.02;

  void validate() const {
    if (!(keep_lo > 0.0 && keep_lo <= keep_hi && keep_hi <= 1.0)) throw InvalidArgument("bottleneck: keep range must lie in (0,1]");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidArgument("bottleneck: dropout outside [0,1)");
    if (!(sigma >= 0.0)) throw InvalidArgument("bottleneck: sigma must be >= 0");
  }
};

/// Everything the generator needs: embedder, backbone, flow head and flow settings.
struct GeneratorConfig {
  backbone::EmbedderConfig embed{};
  backbone::BackboneConfig backbone{};
  flow::FlowHeadConfig head{};
  flow::FlowConfig flow{};
  BottleneckConfig bottleneck{};
};

struct Bottleneck {
  Expr tokens;                    // degraded copy, T_z x d
  std::vector<std::size_t> kept;  // sorted retained token indices
  Tensor keep_mask;               // 1 on kept rows
  Tensor feature_mask;            // 0 on dropped entries
};

/// Keeps ceil(f T_z) random tokens (f uniform in the keep range), replaces the rest with the
/// learned `lra/mask_token` (unit-scale init, like the latents), zeroes Bernoulli(dropout) entries and adds N(0, sigma^2) noise.
inline Bottleneck bottleneck_condition(const nn::Scope& root, const Tensor& z, const BottleneckConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t T = z.rows(), d = z.cols();
  if (T < 2) throw InvalidArgument("bottleneck: need at least 2 latent tokens");
  const double f = cfg.keep_lo == cfg.keep_hi ? cfg.keep_lo : rng.uniform(cfg.keep_lo, cfg.keep_hi);
  const std::size_t keep = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(f * static_cast<double>(T) - 1e-12)), 1, T);
  std::vector<std::size_t> order(T);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng.engine());
  Bottleneck b;
  b.kept.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
  std::sort(b.kept.begin(), b.kept.end());
  b.keep_mask = Tensor({T, d});
  for (std::size_t i : b.kept) {
    for (std::size_t c = 0; c < d; ++c) b.keep_mask.at(i, c) = 1.0;
  }
  b.feature_mask = Tensor({T, d}, 1.0);
  Tensor noise({T, d});
  for (std::size_t i = 0; i < T * d; ++i) {
    if (cfg.dropout > 0.0 && rng.bernoulli(cfg.dropout)) b.feature_mask[i] = 0.0;
    if (cfg.sigma > 0.0) noise[i] = cfg.sigma * rng.normal();
  }
  Expr tokens = constant(z);
  if (keep < T) {
    Tensor drop({T, d});
    for (std::size_t i = 0; i < T * d; ++i) drop[i] = 1.0 - b.keep_mask[i];
    const Expr mask_token = broadcast_rows(root.sub("lra").param("mask_token", {1, d}, nn::Init::Fan), T);
    tokens = add(mul(tokens, constant(b.keep_mask)), mul(mask_token, constant(drop)));
  }
  if (cfg.dropout > 0.0) tokens = mul(tokens, constant(b.feature_mask));
  if (cfg.sigma > 0.0) tokens = add(tokens, constant(noise));
  b.tokens = tokens;
  return b;
}

/// Backbone states for a latent used as the condition: embed, then a single motion span.
inline Expr latent_condition(const nn::Scope& root, const Expr& z_cond, const GeneratorConfig& cfg) {
  const Expr e = backbone::embed_latent(root, z_cond, cfg.embed);
  const auto layout = backbone::SegmentLayout::of({{backbone::Modality::Motion, z_cond.rows()}});
  return backbone::backbone_forward(root, e, layout, cfg.backbone);
}

struct LraTerms {
  Expr loss;
  Tensor z0;
  double t = 0.0;
  Tensor target;  // z - z0
};

/// One reconstruction draw on clean latent z: mean squared error between the head's velocity
/// and z - z0, where the head sees z_t and the backbone sees only the degraded condition.
inline LraTerms lra_step(const nn::Scope& root, const Tensor& z, Rng& rng, const GeneratorConfig& cfg) {
  Bottleneck b = bottleneck_condition(root, z, cfg.bottleneck, rng);
  const Expr cond = latent_condition(root, b.tokens, cfg);
  const flow::FlowBatch fb = flow::make_flow_batch(z, rng, cfg.flow);
  LraTerms out;
  out.z0 = fb.x0;
  out.t = fb.t;
  out.target = fb.ut;
  const Expr v = flow::flow_head_forward(root, constant(fb.xt), fb.t, cond, cfg.head);
  out.loss = flow::flow_loss(v, constant(out.target));
  return out;
}

/// Batch mean of lra_step losses.
inline Expr lra_loss(const nn::Scope& root, const std::vector<Tensor>& latents, Rng& rng, const GeneratorConfig& cfg) {
  if (latents.empty()) throw InvalidArgument("lra_loss: empty batch");
  Expr total = lra_step(root, latents.front(), rng, cfg).loss;
  for (std::size_t i = 1; i < latents.size(); ++i) total = add(total, lra_step(root, latents[i], rng, cfg).loss);
  return scale(total, 1.0 / static_cast<double>(latents.size()));
}

/// Random permutation without fixed points (Sattolo's single-cycle shuffle).
inline std::vector<std::size_t> derangement(std::size_t n, Rng& rng) {
  if (n < 2) throw InvalidArgument("derangement: need at least 2 items");
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(p[i], p[rng.index(i)]);
  return p;
}

/// Sample a latent conditioned on the clean latent `cond` with guidance 1.
inline Tensor reconstruct_latent(const ParamStore& store, const Tensor& cond, const Tensor& x0, const GeneratorConfig& cfg) {
  const nn::Scope s(store);
  const Tensor hidden = evaluate(latent_condition(s, constant(cond), cfg), store);
  flow::FlowConfig fc = cfg.flow;
  fc.guidance = 1.0;
  const flow::VelocityFn v = [&](const Tensor& x, double t, bool) {
    return evaluate(flow::flow_head_forward(s, constant(x), t, constant(hidden), cfg.head), store);
  };
  return flow::euler_sample(v, x0, fc, true);
}

struct ShuffleReport {
  double matched_err = 0.0;
  double shuffled_err = 0.0;
  double ratio = 0.0;
  double frechet_matched = 0.0;   // generated vs targets, over flattened latents
  double frechet_shuffled = 0.0;
};

inline double mean_sq_diff(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

/// Reconstruction error with each latent's own clean condition versus a deranged pairing.
/// Sample i starts from the same noise in both passes. `sampler` maps (cond, x0) to x1.
template <class Sampler>
ShuffleReport shuffled_condition_eval(const std::vector<Tensor>& latents, Sampler&& sampler, std::uint64_t seed) {
  if (latents.size() < 2) throw InvalidArgument("shuffled_condition_eval: need at least 2 latents");
  const std::size_t n = latents.size();
  Rng prng(seed, 0x5f1e);
  const std::vector<std::size_t> perm = derangement(n, prng);
  const std::size_t flat = latents.front().size();
  Tensor targets({n, flat}), gen_m({n, flat}), gen_s({n, flat});
  ShuffleReport r;
  for (std::size_t i = 0; i < n; ++i) {
    Rng chain(seed, 1000 + i);
    const Tensor x0 = chain.normal_tensor(latents[i].shape());
    const Tensor m = sampler(latents[i], x0);
    const Tensor s = sampler(latents[perm[i]], x0);
    r.matched_err += mean_sq_diff(m, latents[i]) / static_cast<double>(n);
    r.shuffled_err += mean_sq_diff(s, latents[i]) / static_cast<double>(n);
    for (std::size_t k = 0; k < flat; ++k) {
      targets.at(i, k) = latents[i][k];
      gen_m.at(i, k) = m[k];
      gen_s.at(i, k) = s[k];
    }
  }
  r.ratio = r.shuffled_err / r.matched_err;
  r.frechet_matched = metrics::frechet_gaussian(gen_m, targets);
  r.frechet_shuffled = metrics::frechet_gaussian(gen_s, targets);
  return r;
}

inline ShuffleReport shuffled_condition_eval(const ParamStore& store, const std::vector<Tensor>& latents,
                                             const GeneratorConfig& cfg, std::uint64_t seed) {
  return shuffled_condition_eval(
      latents, [&](const Tensor& cond, const Tensor& x0) { return reconstruct_latent(store, cond, x0, cfg); }, seed);
}

/// Stage-0 trainable set: embedder, flow head, mask token and motion-branch adapters.
inline bool lra_trainable(const std::string& name) {
  if (name.rfind("embed/", 0) == 0 || name.rfind("flow/", 0) == 0 || name.rfind("lra/", 0) == 0) return true;
  return name.rfind("backbone/", 0) == 0 && backbone::is_lora_param(name, true);
}

}  // namespace mlat::lra
