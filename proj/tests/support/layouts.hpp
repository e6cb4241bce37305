#pragma once

#include "mlat/backbone/layout.hpp"
#include "mlat/core/rng.hpp"

namespace mlat::oracle {

/// Random layout with 1..max_spans spans and at most max_len tokens.
inline backbone::SegmentLayout random_layout(Rng& rng, std::size_t max_len = 32, std::size_t max_spans = 6) {
  using backbone::Modality;
  const std::size_t spans = 1 + rng.index(max_spans);
  std::vector<std::pair<Modality, std::size_t>> parts;
  std::size_t budget = max_len;
  for (std::size_t s = 0; s < spans && budget > 0; ++s) {
    const std::size_t cap = std::max<std::size_t>(1, budget - (spans - s - 1 < budget ? spans - s - 1 : 0));
    const std::size_t len = 1 + rng.index(std::min<std::size_t>(cap, 10));
    const Modality m = static_cast<Modality>(rng.index(3));
    parts.emplace_back(m, len);
    budget -= len;
  }
  return backbone::SegmentLayout::of(parts);
}

}  // namespace mlat::oracle
