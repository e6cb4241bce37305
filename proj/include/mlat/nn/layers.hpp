#pragma once

// Shared network building blocks. Parameters are declared lazily through a Scope: the first
// forward pass on a mutable store creates them; a Scope over a const store only resolves
// existing names.

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mlat/core/rng.hpp"
#include "mlat/diff/expr.hpp"

namespace mlat::nn {

enum class Init { Fan, Zeros, Ones, Normal002 };

class Scope {
 public:
  Scope(ParamStore& store, Rng& rng, std::string prefix = "")
      : store_(&store), mutable_(&store), rng_(&rng), prefix_(std::move(prefix)) {}
  Scope(const ParamStore& store, std::string prefix = "") : store_(&store), prefix_(std::move(prefix)) {}

  Scope sub(const std::string& name) const {
    Scope s = *this;
    s.prefix_ = prefix_.empty() ? name : prefix_ + "/" + name;
    return s;
  }

  std::string full(const std::string& name) const { return prefix_.empty() ? name : prefix_ + "/" + name; }
  const std::string& prefix() const noexcept { return prefix_; }
  const ParamStore& store() const noexcept { return *store_; }

  Expr param(const std::string& name, const Shape& shape, Init init) const {
    const std::string id = full(name);
    if (!store_->contains(id)) {
      if (!mutable_) throw UnresolvedParameter("unresolved parameter '" + id + "'");
      mutable_->declare(id, shape, [&] { return make_init(shape, init); });
    }
    if (store_->get(id).shape() != shape) {
      throw ShapeError("parameter '" + id + "' requested as " + shape_str(shape) + ", stored as " +
                       shape_str(store_->get(id).shape()));
    }
    return parameter(id, shape);
  }

 private:
  Tensor make_init(const Shape& shape, Init init) const {
    switch (init) {
      case Init::Zeros: return Tensor(shape);
      case Init::Ones: return Tensor(shape, 1.0);
      case Init::Normal002: return rng_->normal_tensor(shape, 0.02);
      case Init::Fan: {
        const double fan_in = static_cast<double>(shape.empty() ? 1 : shape.front());
        return rng_->normal_tensor(shape, 1.0 / std::sqrt(fan_in));
      }
    }
    return Tensor(shape);
  }

  const ParamStore* store_ = nullptr;
  ParamStore* mutable_ = nullptr;
  Rng* rng_ = nullptr;
  std::string prefix_;
};

/// y = x W + b, W: [d_in, d_out].
inline Expr linear(const Scope& s, const Expr& x, std::size_t d_out, bool bias = true, bool zero_init = false) {
  const std::size_t d_in = x.cols();
  Expr y = matmul(x, s.param("w", {d_in, d_out}, zero_init ? Init::Zeros : Init::Fan));
  if (bias) y = add_row(y, s.param("b", {d_out}, Init::Zeros));
  return y;
}

/// Linear -> GELU -> Linear.
inline Expr mlp(const Scope& s, const Expr& x, std::size_t hidden, std::size_t d_out) {
  return linear(s.sub("fc2"), gelu(linear(s.sub("fc1"), x, hidden)), d_out);
}

/// RMS normalization with a learned per-channel gain.
inline Expr rms_norm(const Scope& s, const Expr& x) {
  return mul_row(rms_norm_rows(x), s.param("gain", {x.cols()}, Init::Ones));
}

/// Rows [0, count) of a learned [max_len, width] table.
inline Expr positional(const Scope& s, std::size_t count, std::size_t width, std::size_t max_len) {
  if (count > max_len) {
    throw InvalidArgument("positional table '" + s.full("table") + "' holds " + std::to_string(max_len) +
                          " rows, " + std::to_string(count) + " requested");
  }
  return slice(s.param("table", {max_len, width}, Init::Normal002), 0, 0, count);
}

/// Projection hook so attention can run over plain linears or routed adapters.
using Projection = std::function<Expr(const Scope&, const Expr&, std::size_t)>;

inline Projection plain_projection() {
  return [](const Scope& s, const Expr& x, std::size_t d_out) { return linear(s, x, d_out); };
}

/// Multi-head self-attention over the rows of x. `mask` is an additive [L, L] table of 0 / -inf.
inline Expr attention(const Scope& s, const Expr& x, std::size_t heads, const std::optional<Tensor>& mask,
                      const Projection& proj) {
  const std::size_t L = x.rows();
  const std::size_t w = x.cols();
  if (heads == 0 || w % heads != 0) throw InvalidArgument("attention: width not divisible by head count");
  const std::size_t hd = w / heads;
  Expr q = proj(s.sub("q"), x, w);
  Expr k = proj(s.sub("k"), x, w);
  Expr v = proj(s.sub("v"), x, w);
  std::optional<Expr> mask_expr;
  if (mask) {
    if (mask->shape() != Shape{L, L}) throw ShapeError("attention: mask " + shape_str(mask->shape()) + " for " + std::to_string(L) + " tokens");
    mask_expr = constant(*mask);
  }
  const double inv = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<Expr> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Expr qh = slice(q, 1, h * hd, (h + 1) * hd);
    Expr kh = slice(k, 1, h * hd, (h + 1) * hd);
    Expr vh = slice(v, 1, h * hd, (h + 1) * hd);
    Expr scores = scale(matmul(qh, transpose(kh)), inv);
    if (mask_expr) scores = add(scores, *mask_expr);
    outs.push_back(matmul(softmax_rows(scores), vh));
  }
  Expr merged = heads == 1 ? outs.front() : concat(outs, 1);
  return proj(s.sub("o"), merged, w);
}

struct BlockConfig {
  std::size_t heads = 4;
  std::size_t mlp_ratio = 2;
};

/// Pre-norm residual transformer block.
inline Expr transformer_block(const Scope& s, const Expr& x, const BlockConfig& cfg,
                              const std::optional<Tensor>& mask = std::nullopt,
                              const Projection& proj = plain_projection()) {
  Expr h = add(x, attention(s.sub("attn"), rms_norm(s.sub("norm1"), x), cfg.heads, mask, proj));
  return add(h, mlp(s.sub("mlp"), rms_norm(s.sub("norm2"), h), cfg.mlp_ratio * x.cols(), x.cols()));
}

/// Encoder stack with U-Net style mirrored skips: the output of layer i is concatenated onto
/// the input of layer N-1-i (for i < N-1-i) and merged back to width by a linear layer.
inline Expr skip_stack(const Scope& s, const Expr& x, std::size_t layers, const BlockConfig& cfg,
                       const std::optional<Tensor>& mask = std::nullopt) {
  std::vector<Expr> outs;
  outs.reserve(layers);
  Expr h = x;
  for (std::size_t i = 0; i < layers; ++i) {
    const Scope layer = s.sub("layer" + std::to_string(i));
    if (2 * i > layers - 1) {
      const std::size_t partner = layers - 1 - i;
      h = linear(layer.sub("skip"), concat({h, outs[partner]}, 1), x.cols());
    }
    h = transformer_block(layer, h, cfg, mask);
    outs.push_back(h);
  }
  return rms_norm(s.sub("final_norm"), h);
}

}  // namespace mlat::nn
