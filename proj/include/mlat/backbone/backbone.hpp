#pragma once

// Dual-path latent embedder, modality-routed low-rank adapters and the masked transformer
// stack that consumes mixed token sequences.
//
// Parameter layout:
//   embed/semantic/...   MLP to d_s, positions, bidirectional encoder layers
//   embed/gen/...        MLP (or single linear) to d_h, positions
//   embed/fuse/...       concat -> RMSNorm -> MLP to d_h
//   backbone/blockK/...  base weights `w`, `b`; adapters `lora_a/{A,B}` (text, image) and
//                        `lora_b/{A,B}` (motion) on the q/k/v/o projections

#include <optional>
#include <vector>

#include "mlat/backbone/layout.hpp"
#include "mlat/nn/layers.hpp"

namespace mlat::backbone {

struct EmbedderConfig {
  std::size_t semantic_width = 32;  // d_s
  std::size_t semantic_layers = 2;  // N_s
  std::size_t hidden = 64;          // d_h
  std::size_t max_tokens = 16;      // positional table rows
  nn::BlockConfig block{};
  bool gen_single_linear = false;

  void validate() const {
    if (semantic_width == 0 || hidden == 0) throw InvalidArgument("embedder: widths must be positive");
    if (semantic_layers < 1) throw InvalidArgument("embedder: need at least one semantic layer");
  }
};

struct BackboneConfig {
  std::size_t blocks = 2;
  nn::BlockConfig block{};
  std::size_t lora_rank = 4;
};

inline Expr semantic_branch(const nn::Scope& root, const Expr& z, const EmbedderConfig& cfg) {
  const nn::Scope s = root.sub("embed/semantic");
  Expr h = nn::mlp(s.sub("mlp"), z, 2 * cfg.semantic_width, cfg.semantic_width);
  h = add(h, nn::positional(s.sub("pos"), z.rows(), cfg.semantic_width, cfg.max_tokens));
  for (std::size_t i = 0; i < cfg.semantic_layers; ++i) h = nn::transformer_block(s.sub("layer" + std::to_string(i)), h, cfg.block);
  return h;
}

inline Expr generation_branch(const nn::Scope& root, const Expr& z, const EmbedderConfig& cfg) {
  const nn::Scope s = root.sub("embed/gen");
  Expr h = cfg.gen_single_linear ? nn::linear(s.sub("proj"), z, cfg.hidden) : nn::mlp(s.sub("mlp"), z, 2 * cfg.hidden, cfg.hidden);
  return add(h, nn::positional(s.sub("pos"), z.rows(), cfg.hidden, cfg.max_tokens));
}

inline Expr fuse_embeddings(const nn::Scope& root, const Expr& e_und, const Expr& e_gen, const EmbedderConfig& cfg) {
  if (e_und.rows() != e_gen.rows()) {
    throw ShapeError("fuse_embeddings: token counts differ, " + shape_str(e_und.shape()) + " vs " + shape_str(e_gen.shape()));
  }
  const nn::Scope s = root.sub("embed/fuse");
  const Expr h = nn::rms_norm(s.sub("norm"), concat({e_und, e_gen}, 1));
  return nn::mlp(s.sub("mlp"), h, 2 * cfg.hidden, cfg.hidden);
}

/// Full dual-path embedding of a latent sequence: T_z x d -> T_z x d_h.
inline Expr embed_latent(const nn::Scope& root, const Expr& z, const EmbedderConfig& cfg) {
  return fuse_embeddings(root, semantic_branch(root, z, cfg), generation_branch(root, z, cfg), cfg);
}

/// Image token from a sampled feature map: joint-pooled and globally pooled channels,
/// concatenated, normalized and projected to d_h.
inline Expr image_token(const nn::Scope& root, const Tensor& joint_samples, const Tensor& global_pool,
                        const EmbedderConfig& cfg) {
  Tensor pooled({1, joint_samples.cols()});
  for (std::size_t j = 0; j < joint_samples.rows(); ++j) {
    for (std::size_t c = 0; c < joint_samples.cols(); ++c) pooled.at(0, c) += joint_samples.at(j, c) / static_cast<double>(joint_samples.rows());
  }
  const nn::Scope s = root.sub("embed/image");
  const Expr h = nn::rms_norm(s.sub("norm"), concat({constant(pooled), constant(global_pool.reshaped({1, global_pool.size()}))}, 1));
  return nn::mlp(s.sub("mlp"), h, 2 * cfg.hidden, cfg.hidden);
}

/// Row mask selecting the tokens routed to one adapter branch, broadcast over `width` columns.
inline Tensor route_mask(const std::vector<Modality>& tags, bool motion_branch, std::size_t width) {
  Tensor m({tags.size(), width});
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const bool to_b = tags[i] == Modality::Motion;
    if (to_b == motion_branch) {
      for (std::size_t c = 0; c < width; ++c) m.at(i, c) = 1.0;
    }
  }
  return m;
}

/// y = x W + b + (M_a x) A_a B_a + (M_b x) A_b B_b. Text and image rows use adapter a, motion
/// rows adapter b. B matrices start at zero, so a fresh layer equals its base projection.
inline Expr routed_lora_forward(const nn::Scope& s, const Expr& x, const std::vector<Modality>& tags, std::size_t d_out,
                                std::size_t rank) {
  if (tags.size() != x.rows()) {
    throw InvalidArgument("routed_lora: " + std::to_string(tags.size()) + " modality tags for " + std::to_string(x.rows()) + " tokens");
  }
  const std::size_t d_in = x.cols();
  Expr y = nn::linear(s, x, d_out);
  if (rank == 0) return y;
  for (const bool motion_branch : {false, true}) {
    const nn::Scope a = s.sub(motion_branch ? "lora_b" : "lora_a");
    const Expr routed = mul(x, constant(route_mask(tags, motion_branch, d_in)));
    const Expr down = matmul(routed, a.param("A", {d_in, rank}, nn::Init::Fan));
    y = add(y, matmul(down, a.param("B", {rank, d_out}, nn::Init::Zeros)));
  }
  return y;
}

/// Adapter parameters relative to base parameters, both branches counted.
inline double lora_overhead(const std::vector<std::pair<std::size_t, std::size_t>>& dims, std::size_t rank) {
  double extra = 0, base = 0;
  for (const auto& [din, dout] : dims) {
    extra += 2.0 * static_cast<double>(rank) * static_cast<double>(din + dout);
    base += static_cast<double>(din) * static_cast<double>(dout);
  }
  if (base == 0) throw InvalidArgument("lora_overhead: no base projections");
  return extra / base;
}

inline nn::Projection routed_projection(const std::vector<Modality>& tags, std::size_t rank) {
  return [tags, rank](const nn::Scope& s, const Expr& x, std::size_t d_out) { return routed_lora_forward(s, x, tags, d_out, rank); };
}

/// N_b pre-norm blocks with the hybrid mask and routed projections: L x d_h -> L x d_h.
inline Expr backbone_forward(const nn::Scope& root, const Expr& tokens, const SegmentLayout& layout, const BackboneConfig& cfg) {
  if (tokens.rows() != layout.size()) {
    throw ShapeError("backbone: " + std::to_string(tokens.rows()) + " tokens for a layout of " + std::to_string(layout.size()));
  }
  const Tensor mask = build_hybrid_mask(layout);
  const nn::Projection proj = routed_projection(layout.modalities(), cfg.lora_rank);
  Expr h = tokens;
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    h = nn::transformer_block(root.sub("backbone/block" + std::to_string(b)), h, cfg.block, mask, proj);
  }
  return h;
}

/// Name filters for stage trainable sets.
inline bool is_lora_param(const std::string& name, bool motion_branch) {
  return name.find(motion_branch ? "/lora_b/" : "/lora_a/") != std::string::npos;
}

}  // namespace mlat::backbone
