#pragma once

// Flow matching on the linear path x_t = t x1 + (1 - t) x0: timestep sampling, the AdaLN
// velocity head, classifier-free guidance and the Euler sampler.
//
// Parameter layout under `flow/head`: in, pos, temb, cond, blockK/{ada,attn,cross,mlp}, final.
// The null conditioning embedding lives at `flow/null`.

#include <cmath>
#include <functional>
#include <optional>
#include <string>

#include "mlat/nn/layers.hpp"

namespace mlat::flow {

struct FlowConfig {
  std::size_t steps = 50;     // N_step
  double guidance = 3.0;      // s
  double shift = 3.0;
  double cond_dropout = 0.1;
  double lambda_flow = 0.8;
  double lambda_ntp = 1.0;    // kept for config compatibility; no token loss is trained
  double logit_mu = 0.0;
  double logit_sigma = 1.0;
  bool shift_train = true;
  bool shift_sample = true;

  void validate() const {
    if (steps < 1) throw InvalidArgument("flow: steps must be >= 1");
    if (!(guidance >= 0.0)) throw InvalidArgument("flow: guidance scale must be >= 0");
    if (!(shift > 0.0)) throw InvalidArgument("flow: shift must be > 0");
    if (!(cond_dropout >= 0.0 && cond_dropout <= 1.0)) throw InvalidArgument("flow: condition dropout outside [0,1]");
    if (!(logit_sigma > 0.0)) throw InvalidArgument("flow: logit-normal sigma must be > 0");
  }
};

struct FlowHeadConfig {
  std::size_t blocks = 2;  // N_d
  std::size_t width = 64;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 2;
  std::size_t time_dim = 64;
  std::size_t max_tokens = 16;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// t = sigmoid(mu + sigma g), g ~ N(0, 1).
inline double sample_timestep(Rng& rng, const FlowConfig& cfg) {
  return sigmoid(cfg.logit_mu + cfg.logit_sigma * rng.normal());
}

/// shift t / (1 + (shift - 1) t).
inline double time_shift(double t, double shift) {
  if (!(shift > 0.0)) throw InvalidArgument("time_shift: shift must be > 0");
  if (!(t >= 0.0 && t <= 1.0)) throw InvalidArgument("time_shift: t outside [0,1]");
  if (shift == 1.0) return t;
  return shift * t / (1.0 + (shift - 1.0) * t);
}

inline void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) throw ShapeError(std::string(what) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

inline Tensor interpolate(const Tensor& x0, const Tensor& x1, double t) {
  require_same(x0, x1, "interpolate");
  Tensor out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = t * x1[i] + (1.0 - t) * x0[i];
  return out;
}

inline Tensor target_velocity(const Tensor& x0, const Tensor& x1) {
  require_same(x0, x1, "target_velocity");
  Tensor out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x1[i] - x0[i];
  return out;
}

/// One training draw: noise, timestep (shifted when enabled), interpolant and target.
struct FlowBatch {
  Tensor x0, x1;
  double t = 0.0;
  Tensor xt, ut;
};

inline FlowBatch make_flow_batch(const Tensor& x1, Rng& rng, const FlowConfig& cfg) {
  FlowBatch b;
  b.x1 = x1;
  b.x0 = rng.normal_tensor(x1.shape());
  b.t = sample_timestep(rng, cfg);
  if (cfg.shift_train) b.t = time_shift(b.t, cfg.shift);
  b.xt = interpolate(b.x0, b.x1, b.t);
  b.ut = target_velocity(b.x0, b.x1);
  return b;
}

/// [1, dim] sinusoidal embedding of t scaled to [0, 1000].
inline Tensor timestep_embedding(double t, std::size_t dim) {
  if (dim < 2 || dim % 2 != 0) throw InvalidArgument("timestep embedding: dim must be even and >= 2");
  const std::size_t half = dim / 2;
  Tensor e({1, dim});
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    e.at(0, i) = std::cos(1000.0 * t * freq);
    e.at(0, half + i) = std::sin(1000.0 * t * freq);
  }
  return e;
}

/// x * (1 + scale) + shift with [1, W] modulation rows.
inline Expr modulate(const Expr& x, const Expr& shift, const Expr& scale) {
  return add_row(mul_row(x, affine(scale, 1.0, 1.0)), shift);
}

/// Attention from the rows of x to the rows of ctx.
inline Expr cross_attention(const nn::Scope& s, const Expr& x, const Expr& ctx, std::size_t heads) {
  const std::size_t w = x.cols();
  if (heads == 0 || w % heads != 0) throw InvalidArgument("cross attention: width not divisible by head count");
  const std::size_t hd = w / heads;
  const Expr q = nn::linear(s.sub("q"), x, w);
  const Expr k = nn::linear(s.sub("k"), ctx, w);
  const Expr v = nn::linear(s.sub("v"), ctx, w);
  const double inv = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<Expr> outs;
  for (std::size_t h = 0; h < heads; ++h) {
    const Expr qh = slice(q, 1, h * hd, (h + 1) * hd);
    const Expr kh = slice(k, 1, h * hd, (h + 1) * hd);
    const Expr vh = slice(v, 1, h * hd, (h + 1) * hd);
    outs.push_back(matmul(softmax_rows(scale(matmul(qh, transpose(kh)), inv)), vh));
  }
  return nn::linear(s.sub("o"), heads == 1 ? outs.front() : concat(outs, 1), w);
}

inline Expr mean_rows(const Expr& x) {
  return matmul(constant(Tensor({1, x.rows()}, 1.0 / static_cast<double>(x.rows()))), x);
}

/// Velocity prediction v(x_t, t | cond_hidden): T_z x d. The timestep and the pooled condition
/// drive AdaLN shift/scale in every block; blocks also cross-attend to the condition tokens.
/// A condition with one state per latent token (the lra case) is also projected onto the
/// matching input token. The final projection starts at zero.
inline Expr flow_head_forward(const nn::Scope& root, const Expr& x_t, double t, const Expr& cond_hidden,
                              const FlowHeadConfig& cfg) {
  if (!std::isfinite(t)) throw NumericalError("flow head: non-finite timestep");
  const nn::Scope s = root.sub("flow/head");
  const std::size_t W = cfg.width;
  Expr h = add(nn::linear(s.sub("in"), x_t, W), nn::positional(s.sub("pos"), x_t.rows(), W, cfg.max_tokens));
  if (cond_hidden.rows() == x_t.rows()) h = add(h, nn::linear(s.sub("cond_tokens"), cond_hidden, W));
  const Expr temb = nn::mlp(s.sub("temb"), constant(timestep_embedding(t, cfg.time_dim)), W, W);
  const Expr c = gelu(add(temb, nn::linear(s.sub("cond"), mean_rows(cond_hidden), W)));
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    const nn::Scope blk = s.sub("block" + std::to_string(b));
    const Expr mod = nn::linear(blk.sub("ada"), c, 6 * W);
    auto part = [&](std::size_t i) { return slice(mod, 1, i * W, (i + 1) * W); };
    const Expr a = modulate(rms_norm_rows(h), part(0), part(1));
    h = add(h, nn::attention(blk.sub("attn"), a, cfg.heads, std::nullopt, nn::plain_projection()));
    const Expr x = modulate(rms_norm_rows(h), part(2), part(3));
    h = add(h, cross_attention(blk.sub("cross"), x, cond_hidden, cfg.heads));
    const Expr m = modulate(rms_norm_rows(h), part(4), part(5));
    h = add(h, nn::mlp(blk.sub("mlp"), m, cfg.mlp_ratio * W, W));
  }
  const Expr fmod = nn::linear(s.sub("final/ada"), c, 2 * W);
  const Expr f = modulate(rms_norm_rows(h), slice(fmod, 1, 0, W), slice(fmod, 1, W, 2 * W));
  return nn::linear(s.sub("final/out"), f, x_t.cols(), true, true);
}

inline Expr flow_loss(const Expr& v_hat, const Expr& u_t) {
  if (v_hat.shape() != u_t.shape()) throw ShapeError("flow_loss: " + shape_str(v_hat.shape()) + " vs " + shape_str(u_t.shape()));
  return mse(v_hat, u_t);
}

/// v_u + s (v_c - v_u); s = 1 and s = 0 return the corresponding input unchanged.
inline Tensor cfg_velocity(const Tensor& v_uncond, const Tensor& v_cond, double s) {
  require_same(v_uncond, v_cond, "cfg_velocity");
  if (s == 1.0) return v_cond;
  if (s == 0.0) return v_uncond;
  Tensor out(v_cond.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v_uncond[i] + s * (v_cond[i] - v_uncond[i]);
  return out;
}

/// Learned null conditioning, broadcast to `count` tokens of width `width`.
inline Expr null_condition(const nn::Scope& root, std::size_t count, std::size_t width) {
  return broadcast_rows(root.sub("flow").param("null", {1, width}, nn::Init::Normal002), count);
}

struct DroppedCondition {
  Expr tokens;
  bool dropped = false;
};

/// With probability p, swaps every conditioning token for the null embedding.
inline DroppedCondition condition_dropout(const nn::Scope& root, const Expr& cond_tokens, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("condition_dropout: p outside [0,1]");
  const bool drop = p > 0.0 && rng.bernoulli(p);
  if (!drop) return {cond_tokens, false};
  return {null_condition(root, cond_tokens.rows(), cond_tokens.cols()), true};
}

/// v(x, t, conditional). `conditional = false` asks for the null-conditioned velocity.
using VelocityFn = std::function<Tensor(const Tensor& x, double t, bool conditional)>;

/// Time grid 0 = t_0 < ... < t_N = 1, shifted when enabled.
inline std::vector<double> time_grid(const FlowConfig& cfg) {
  std::vector<double> g(cfg.steps + 1);
  for (std::size_t k = 0; k <= cfg.steps; ++k) {
    const double u = static_cast<double>(k) / static_cast<double>(cfg.steps);
    g[k] = cfg.shift_sample ? time_shift(u, cfg.shift) : u;
  }
  g.back() = 1.0;
  return g;
}

/// Explicit Euler from t = 0 to 1. With a condition and s != 1, each step combines a null and a
/// conditional evaluation through cfg_velocity.
inline Tensor euler_sample(const VelocityFn& velocity, const Tensor& x0, const FlowConfig& cfg, bool has_cond) {
  cfg.validate();
  const std::vector<double> grid = time_grid(cfg);
  Tensor x = x0;
  for (std::size_t k = 0; k < cfg.steps; ++k) {
    const double t = grid[k];
    const double dt = grid[k + 1] - t;
    Tensor v;
    if (has_cond && cfg.guidance != 1.0) {
      v = cfg_velocity(velocity(x, t, false), velocity(x, t, true), cfg.guidance);
    } else {
      v = velocity(x, t, has_cond);
    }
    require_same(v, x, "euler_sample velocity");
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] += dt * v[i];
      if (!std::isfinite(x[i])) throw NumericalError("euler_sample: non-finite state at step " + std::to_string(k));
    }
  }
  return x;
}

}  // namespace mlat::flow
