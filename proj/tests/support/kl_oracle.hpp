#pragma once

// Sampling estimate of D_KL(q_s || q_t) = E_{x ~ q_s}[log q_s(x) - log q_t(x)] for diagonal
// Gaussians. Draws are stratified: each dimension gets one uniform draw in each of n
// equal-probability strata. The log-density difference is a sum of per-dimension terms, so its
// sample mean does not depend on how draws are paired across dimensions.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

#include "mlat/core/rng.hpp"

namespace mlat::oracle {

/// Standard normal quantile.
inline double normal_quantile(double u) { return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u); }

/// Per-token rows are summed over dims and averaged over rows, matching kl_between.
inline double monte_carlo_reverse_kl(const Tensor& ms, const Tensor& ls, const Tensor& mt, const Tensor& lt,
                                     std::size_t samples, Rng& rng) {
  const std::size_t rows = ms.rows(), d = ms.cols();
  const double n = static_cast<double>(samples);
  double total = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < d; ++k) {
      const double a = ms.at(r, k), al = ls.at(r, k), b = mt.at(r, k), bl = lt.at(r, k);
      const double sd = std::exp(0.5 * al), va = std::exp(al), vb = std::exp(bl);
      double acc = 0;
      for (std::size_t i = 0; i < samples; ++i) {
        const double u = (static_cast<double>(i) + rng.uniform()) / n;
        const double x = a + sd * normal_quantile(std::clamp(u, 1e-300, 1.0 - 1e-16));
        // log N(x; a, va) - log N(x; b, vb)
        acc += 0.5 * (bl - al) - 0.5 * (x - a) * (x - a) / va + 0.5 * (x - b) * (x - b) / vb;
      }
      total += acc / n;
    }
  }
  return total / static_cast<double>(rows);
}

}  // namespace mlat::oracle
