#pragma once

// Mixed-modality token layouts and the hybrid attention mask: text is causal over everything
// before it; every token of a motion or image span sees its whole span plus everything strictly
// before the span starts.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mlat/core/errors.hpp"
#include "mlat/core/tensor.hpp"

namespace mlat::backbone {

enum class Modality { Text, Image, Motion };

inline const char* modality_name(Modality m) {
  switch (m) {
    case Modality::Text: return "text";
    case Modality::Image: return "image";
    case Modality::Motion: return "motion";
  }
  return "?";
}

struct Span {
  Modality modality;
  std::size_t start, length;
  std::size_t end() const noexcept { return start + length; }
};

struct SegmentLayout {
  std::vector<Span> spans;

  static SegmentLayout of(const std::vector<std::pair<Modality, std::size_t>>& parts) {
    SegmentLayout l;
    std::size_t at = 0;
    for (const auto& [m, n] : parts) {
      l.spans.push_back({m, at, n});
      at += n;
    }
    l.validate();
    return l;
  }

  std::size_t size() const noexcept { return spans.empty() ? 0 : spans.back().end(); }

  void validate() const {
    std::size_t at = 0;
    for (const auto& s : spans) {
      if (s.length == 0) throw InvalidArgument("layout: empty span");
      if (s.start != at) throw InvalidArgument("layout: spans must be contiguous and ordered");
      at = s.end();
    }
  }

  const Span& span_of(std::size_t i) const {
    for (const auto& s : spans) {
      if (i >= s.start && i < s.end()) return s;
    }
    throw InvalidArgument("layout: token " + std::to_string(i) + " outside layout");
  }

  std::vector<Modality> modalities() const {
    std::vector<Modality> out;
    out.reserve(size());
    for (const auto& s : spans) out.insert(out.end(), s.length, s.modality);
    return out;
  }
};

/// The attention rule as a predicate: may token i attend to token j?
inline bool hybrid_allows(const SegmentLayout& layout, std::size_t i, std::size_t j) {
  const Span& s = layout.span_of(i);
  if (s.modality == Modality::Text) return j <= i;
  return j < s.start || (j >= s.start && j < s.end());
}

inline constexpr double kBlocked = -std::numeric_limits<double>::infinity();

/// Additive L x L mask: 0 where attention is allowed, -inf elsewhere.
inline Tensor build_hybrid_mask(const SegmentLayout& layout) {
  layout.validate();
  const std::size_t L = layout.size();
  Tensor m({L, L}, kBlocked);
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j < L; ++j) {
      if (hybrid_allows(layout, i, j)) m.at(i, j) = 0.0;
    }
  }
  return m;
}

struct LeakageReport {
  bool ok = true;
  std::optional<std::pair<std::size_t, std::size_t>> counterexample;
  std::string reason;
};

/// Brute-force audit of a mask against a layout. Checks, in order: entries are exactly 0 or
/// -inf; no row reaches past the end of its own span; text rows are causal; every allowed pair
/// satisfies the attention rule. The first violation found is reported.
inline LeakageReport verify_no_leakage(const SegmentLayout& layout, const Tensor& mask) {
  const std::size_t L = layout.size();
  auto fail = [](std::size_t i, std::size_t j, std::string why) {
    return LeakageReport{false, std::make_pair(i, j), std::move(why)};
  };
  if (mask.shape() != Shape{L, L}) {
    return {false, std::nullopt, "mask shape " + shape_str(mask.shape()) + " for " + std::to_string(L) + " tokens"};
  }
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j < L; ++j) {
      const double v = mask.at(i, j);
      if (!(v == 0.0 || v == kBlocked)) return fail(i, j, "entry is neither 0 nor -inf");
    }
  }
  for (std::size_t i = 0; i < L; ++i) {
    const Span& s = layout.span_of(i);
    for (std::size_t j = s.end(); j < L; ++j) {
      if (mask.at(i, j) == 0.0) return fail(i, j, "row attends past the end of its span");
    }
  }
  for (std::size_t i = 0; i < L; ++i) {
    if (layout.span_of(i).modality != Modality::Text) continue;
    for (std::size_t j = i + 1; j < L; ++j) {
      if (mask.at(i, j) == 0.0) return fail(i, j, "text row attends to a later token");
    }
  }
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j < L; ++j) {
      if (mask.at(i, j) == 0.0 && !hybrid_allows(layout, i, j)) return fail(i, j, "allowed pair violates the attention rule");
    }
  }
  return {};
}

}  // namespace mlat::backbone
