#pragma once

// Cross-modal aligned motion VAE.
//
// Parameter layout:
//   vae/front/...       shared front-end: input projection, positions, skip stack, pooling
//   vae/motion_head     motion-only posterior head
//   vae/fused/...       vision-fused encoder (vision projection, own skip stack, head)
//   vae/dec/...         decoder
// Both encoders call the same front-end function under the same scope, so they read the same
// parameters.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "mlat/core/rng.hpp"
#include "mlat/diff/expr.hpp"
#include "mlat/motion/repr.hpp"
#include "mlat/nn/layers.hpp"
#include "mlat/synth/generator.hpp"

namespace mlat::vae {

struct VaeConfig {
  std::size_t frames = 32;
  std::size_t latent_tokens = 0;  // 0: max(1, ceil(frames / 8))
  std::size_t latent_dim = 16;
  std::size_t width = 64;
  std::size_t encoder_layers = 4;
  std::size_t decoder_layers = 4;
  nn::BlockConfig block{};
  std::size_t vision_dim = 16;
  synth::ImageSettings image{};
  std::size_t max_frames = 64;
  double lambda_kl = 1e-4;
  double lambda_align = 1e-3;
  std::size_t align_warmup = 500;
  double lambda_joint = 0.0;  // optional auxiliary loss on columns [0, 67)
  std::size_t joint_warmup = 500;

  std::size_t tokens() const {
    if (latent_tokens) return latent_tokens;
    return std::max<std::size_t>(1, (frames + 7) / 8);
  }

  void validate() const {
    if (tokens() < 1 || tokens() > frames) throw InvalidArgument("vae: latent tokens must lie in [1, frames]");
    if (latent_dim < 2) throw InvalidArgument("vae: latent dim must be at least 2");
    if (lambda_kl < 0 || lambda_align < 0) throw InvalidArgument("vae: loss weights must be non-negative");
    if (frames > max_frames) throw InvalidArgument("vae: frames exceed positional table");
  }
};

inline constexpr double kLogVarMin = -30.0;
inline constexpr double kLogVarMax = 20.0;

struct Posterior {
  Expr mean, log_var;
};

struct PosteriorValue {
  Tensor mean, log_var;
};

/// Strided mean pooling: frame t belongs to token floor(t * Tz / T).
inline Tensor pooling_matrix(std::size_t T, std::size_t Tz) {
  Tensor p({Tz, T});
  std::vector<double> count(Tz, 0.0);
  for (std::size_t t = 0; t < T; ++t) count[t * Tz / T] += 1.0;
  for (std::size_t t = 0; t < T; ++t) p.at(t * Tz / T, t) = 1.0 / count[t * Tz / T];
  return p;
}

/// Nearest-repeat unpooling, the transpose pattern of pooling_matrix with unit weights.
inline Tensor unpooling_matrix(std::size_t T, std::size_t Tz) {
  Tensor u({T, Tz});
  for (std::size_t t = 0; t < T; ++t) u.at(t, t * Tz / T) = 1.0;
  return u;
}

/// Row shift with zero padding: (S x)[t] = x[t + k].
inline Tensor shift_matrix(std::size_t T, long k) {
  Tensor s({T, T});
  for (std::size_t t = 0; t < T; ++t) {
    const long src = static_cast<long>(t) + k;
    if (src >= 0 && src < static_cast<long>(T)) s.at(t, static_cast<std::size_t>(src)) = 1.0;
  }
  return s;
}

inline void require_frames(const Expr& x, const VaeConfig& cfg, const char* who) {
  if (x.shape() != Shape{cfg.frames, motion::kReprDim}) {
    throw ShapeError(std::string(who) + ": expected [" + std::to_string(cfg.frames) + ",269], got " +
                     shape_str(x.shape()));
  }
}

/// Shared front-end: T x 269 -> Tz x width.
inline Expr front_end(const nn::Scope& root, const Expr& x, const VaeConfig& cfg) {
  const nn::Scope s = root.sub("vae/front");
  Expr h = nn::linear(s.sub("in"), x, cfg.width);
  h = add(h, nn::positional(s.sub("pos"), cfg.frames, cfg.width, cfg.max_frames));
  h = nn::skip_stack(s.sub("stack"), h, cfg.encoder_layers, cfg.block);
  return matmul(constant(pooling_matrix(cfg.frames, cfg.tokens())), h);
}

inline Posterior posterior_head(const nn::Scope& s, const Expr& h, const VaeConfig& cfg) {
  Expr out = nn::linear(s, h, 2 * cfg.latent_dim);
  return {slice(out, 1, 0, cfg.latent_dim), clamp(slice(out, 1, cfg.latent_dim, 2 * cfg.latent_dim), kLogVarMin, kLogVarMax)};
}

inline Posterior encode_motion(const nn::Scope& root, const Expr& x, const VaeConfig& cfg) {
  require_frames(x, cfg, "encode_motion");
  return posterior_head(root.sub("vae/motion_head"), front_end(root, x, cfg), cfg);
}

/// Bilinear sample of every channel at each joint; coordinates clamp to the border.
inline Tensor grid_sample_at_joints(const synth::FeatureMap& fm, const Tensor& joints2d) {
  if (joints2d.rank() != 2 || joints2d.cols() != 2) {
    throw ShapeError("grid_sample_at_joints: expected [J,2], got " + shape_str(joints2d.shape()));
  }
  const std::size_t J = joints2d.rows();
  Tensor out({J, fm.channels});
  const double xmax = static_cast<double>(fm.width - 1), ymax = static_cast<double>(fm.height - 1);
  for (std::size_t j = 0; j < J; ++j) {
    const double x = std::clamp(joints2d.at(j, 0), 0.0, xmax);
    const double y = std::clamp(joints2d.at(j, 1), 0.0, ymax);
    const auto x0 = static_cast<std::size_t>(std::floor(x)), y0 = static_cast<std::size_t>(std::floor(y));
    const std::size_t x1 = std::min(x0 + 1, fm.width - 1), y1 = std::min(y0 + 1, fm.height - 1);
    const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
    for (std::size_t c = 0; c < fm.channels; ++c) {
      const double top = (1 - fx) * fm.at(c, y0, x0) + fx * fm.at(c, y0, x1);
      const double bottom = (1 - fx) * fm.at(c, y1, x0) + fx * fm.at(c, y1, x1);
      out.at(j, c) = (1 - fy) * top + fy * bottom;
    }
  }
  return out;
}

struct ImageInput {
  synth::FeatureMap map;
  Tensor joints2d;  // 22 x 2 pixels of the reference frame
};

/// Joint-pooled image feature projected to d_v and repeated over the latent tokens.
inline Expr vision_feature(const nn::Scope& root, const ImageInput& img, const VaeConfig& cfg) {
  const Tensor sampled = grid_sample_at_joints(img.map, img.joints2d);
  Tensor pooled({1, sampled.cols()});
  for (std::size_t j = 0; j < sampled.rows(); ++j) {
    for (std::size_t c = 0; c < sampled.cols(); ++c) pooled.at(0, c) += sampled.at(j, c) / static_cast<double>(sampled.rows());
  }
  Expr v = nn::linear(root.sub("vae/fused/vision"), constant(pooled), cfg.vision_dim);
  return broadcast_rows(v, cfg.tokens());
}

inline Posterior encode_fused(const nn::Scope& root, const Expr& x, const ImageInput& img, const VaeConfig& cfg) {
  require_frames(x, cfg, "encode_fused");
  const nn::Scope s = root.sub("vae/fused");
  Expr h = concat({front_end(root, x, cfg), vision_feature(root, img, cfg)}, 1);
  h = nn::linear(s.sub("in"), h, cfg.width);
  h = add(h, nn::positional(s.sub("pos"), cfg.tokens(), cfg.width, cfg.max_frames));
  h = nn::skip_stack(s.sub("stack"), h, cfg.encoder_layers, cfg.block);
  return posterior_head(s.sub("head"), h, cfg);
}

/// z = mean + exp(0.5 log_var) * eps.
inline Expr sample_posterior(const Posterior& p, const Tensor& eps) {
  if (eps.shape() != p.mean.shape()) {
    throw ShapeError("sample_posterior: noise " + shape_str(eps.shape()) + " for posterior " + shape_str(p.mean.shape()));
  }
  return add(p.mean, mul(exp(scale(p.log_var, 0.5)), constant(eps)));
}

/// Tz x d -> T x 269: projection, nearest-repeat unpooling, learned 3-tap temporal smoothing,
/// positions, skip stack, output projection.
inline Expr decode_motion(const nn::Scope& root, const Expr& z, const VaeConfig& cfg) {
  if (z.shape() != Shape{cfg.tokens(), cfg.latent_dim}) {
    throw ShapeError("decode_motion: expected latent " + shape_str({cfg.tokens(), cfg.latent_dim}) + ", got " +
                     shape_str(z.shape()));
  }
  const nn::Scope s = root.sub("vae/dec");
  Expr h = nn::linear(s.sub("in"), z, cfg.width);
  h = matmul(constant(unpooling_matrix(cfg.frames, cfg.tokens())), h);
  Expr smooth = nn::linear(s.sub("tap0"), h, cfg.width, false);
  for (long k : {-1L, 1L}) {
    const Expr shifted = matmul(constant(shift_matrix(cfg.frames, k)), h);
    smooth = add(smooth, nn::linear(s.sub(k < 0 ? "tap_prev" : "tap_next"), shifted, cfg.width, false));
  }
  h = add(h, smooth);
  h = add(h, nn::positional(s.sub("pos"), cfg.frames, cfg.width, cfg.max_frames));
  h = nn::skip_stack(s.sub("stack"), h, cfg.decoder_layers, cfg.block);
  return nn::linear(s.sub("out"), h, motion::kReprDim);
}

/// 0.5 * sum_k (mu^2 + sigma^2 - log sigma^2 - 1), summed over dims, averaged over tokens.
inline Expr kl_to_standard_normal(const Posterior& p) {
  Expr terms = add(add(square(p.mean), exp(p.log_var)), affine(p.log_var, -1.0, -1.0));
  return scale(reduce_sum(terms), 0.5 / static_cast<double>(p.mean.rows()));
}

/// D_KL(student || teacher) for diagonal Gaussians, averaged over tokens. The teacher is
/// detached, so no gradient reaches anything it was computed from.
inline Expr kl_between(const Posterior& student, const Posterior& teacher) {
  if (student.mean.shape() != teacher.mean.shape() || student.log_var.shape() != teacher.log_var.shape()) {
    throw ShapeError("kl_between: student " + shape_str(student.mean.shape()) + " vs teacher " +
                     shape_str(teacher.mean.shape()));
  }
  const Expr mt = stop_gradient(teacher.mean);
  const Expr lt = stop_gradient(teacher.log_var);
  // exp(ls - lt) rather than exp(ls) / exp(lt) keeps KL(p, p) exactly zero.
  Expr ratio = add(exp(sub(student.log_var, lt)), mul(square(sub(student.mean, mt)), exp(neg(lt))));
  Expr terms = affine(add(sub(lt, student.log_var), ratio), 1.0, -1.0);
  return scale(reduce_sum(terms), 0.5 / static_cast<double>(student.mean.rows()));
}

inline double alignment_weight(std::uint64_t step, const VaeConfig& cfg) {
  if (cfg.align_warmup == 0) return cfg.lambda_align;
  return cfg.lambda_align * std::min(1.0, static_cast<double>(step) / static_cast<double>(cfg.align_warmup));
}

/// SmoothL1 restricted to columns [0, 67) (root and relative-joint channels).
inline Expr joint_aux_loss(const Expr& decoded, const Expr& target) {
  if (decoded.shape() != target.shape()) {
    throw ShapeError("joint_aux_loss: " + shape_str(decoded.shape()) + " vs " + shape_str(target.shape()));
  }
  const std::size_t end = motion::kRelativeJoints.end;
  return smooth_l1(slice(decoded, 1, 0, end), slice(target, 1, 0, end));
}

inline double joint_weight(std::uint64_t step, const VaeConfig& cfg) {
  if (cfg.joint_warmup == 0) return cfg.lambda_joint;
  return cfg.lambda_joint * std::min(1.0, static_cast<double>(step) / static_cast<double>(cfg.joint_warmup));
}

struct VaeSample {
  Tensor features;                 // T x 269, standardized
  std::optional<ImageInput> image;  // paired samples only
};

struct LossTerms {
  Expr total, recon, kl_phi;
  std::optional<Expr> kl_psi, align, joint;
  double align_weight = 0.0;
  double joint_weight = 0.0;
};

/// Batch objective. Each sample decodes from its fused latent when it carries an image and
/// from its motion latent otherwise. recon and kl_phi average over all samples; kl_psi and align
/// average over the paired ones and are absent when there are none.
inline LossTerms vae_loss(const nn::Scope& root, const std::vector<VaeSample>& batch, const VaeConfig& cfg,
                          std::uint64_t step, Rng& rng) {
  if (batch.empty()) throw InvalidArgument("vae_loss: empty batch");
  std::vector<Expr> recon, kl_phi, kl_psi, align, joint;
  const Shape latent{cfg.tokens(), cfg.latent_dim};
  for (const auto& s : batch) {
    const Expr x = constant(s.features);
    const Posterior q_phi = encode_motion(root, x, cfg);
    kl_phi.push_back(kl_to_standard_normal(q_phi));
    Expr z;
    if (s.image) {
      const Posterior q_psi = encode_fused(root, x, *s.image, cfg);
      kl_psi.push_back(kl_to_standard_normal(q_psi));
      align.push_back(kl_between(q_phi, q_psi));
      z = sample_posterior(q_psi, rng.normal_tensor(latent));
    } else {
      z = sample_posterior(q_phi, rng.normal_tensor(latent));
    }
    const Expr out = decode_motion(root, z, cfg);
    recon.push_back(smooth_l1(out, x));
    if (cfg.lambda_joint > 0) joint.push_back(joint_aux_loss(out, x));
  }
  auto mean_of = [](const std::vector<Expr>& v) {
    Expr acc = v.front();
    for (std::size_t i = 1; i < v.size(); ++i) acc = add(acc, v[i]);
    return scale(acc, 1.0 / static_cast<double>(v.size()));
  };
  LossTerms t;
  t.recon = mean_of(recon);
  t.kl_phi = mean_of(kl_phi);
  t.align_weight = alignment_weight(step, cfg);
  Expr kl_sum = t.kl_phi;
  t.total = t.recon;
  if (!align.empty()) {
    t.kl_psi = mean_of(kl_psi);
    t.align = mean_of(align);
    kl_sum = add(kl_sum, *t.kl_psi);
    t.total = add(t.total, scale(*t.align, t.align_weight));
  }
  t.total = add(t.total, scale(kl_sum, cfg.lambda_kl));
  if (!joint.empty()) {
    t.joint = mean_of(joint);
    t.joint_weight = joint_weight(step, cfg);
    t.total = add(t.total, scale(*t.joint, t.joint_weight));
  }
  return t;
}

/// Evaluated loss terms; absent parts stay empty.
struct LossValues {
  double total = 0, recon = 0, kl_phi = 0;
  std::optional<double> kl_psi, align, joint;
  double align_weight = 0;
};

inline LossValues loss_values(Evaluator& ev, const LossTerms& t) {
  LossValues v;
  v.total = ev.value(t.total).item();
  v.recon = ev.value(t.recon).item();
  v.kl_phi = ev.value(t.kl_phi).item();
  if (t.kl_psi) v.kl_psi = ev.value(*t.kl_psi).item();
  if (t.align) v.align = ev.value(*t.align).item();
  if (t.joint) v.joint = ev.value(*t.joint).item();
  v.align_weight = t.align_weight;
  return v;
}

/// Declares every VAE parameter by running one paired forward pass.
inline void init_vae(ParamStore& store, const VaeConfig& cfg, Rng& rng) {
  cfg.validate();
  nn::Scope root(store, rng);
  const synth::ImageSettings& img = cfg.image;
  ImageInput image{synth::FeatureMap(img.channels, img.height, img.width), Tensor({motion::kJoints, 2})};
  const Expr x = constant(Tensor({cfg.frames, motion::kReprDim}));
  const Posterior q = encode_fused(root, x, image, cfg);
  encode_motion(root, x, cfg);
  decode_motion(root, q.mean, cfg);
}

inline PosteriorValue evaluate_posterior(Evaluator& ev, const Posterior& p) {
  return {ev.value(p.mean), ev.value(p.log_var)};
}

}  // namespace mlat::vae
