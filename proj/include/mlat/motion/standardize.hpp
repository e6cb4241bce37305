#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "mlat/core/errors.hpp"
#include "mlat/core/tensor.hpp"

namespace mlat::motion {

/// Per-channel affine standardization fitted on a set of [T, D] sequences.
struct Standardizer {
  std::vector<double> mean, stddev;

  static Standardizer fit(const std::vector<Tensor>& seqs, double std_floor = 1e-2) {
    if (seqs.empty()) throw InvalidArgument("standardizer: no sequences");
    const std::size_t d = seqs.front().cols();
    std::vector<double> sum(d, 0.0), sq(d, 0.0);
    std::size_t n = 0;
    for (const auto& s : seqs) {
      if (s.cols() != d) throw ShapeError("standardizer: inconsistent feature width");
      for (std::size_t t = 0; t < s.rows(); ++t) {
        for (std::size_t c = 0; c < d; ++c) sum[c] += s.at(t, c);
      }
      n += s.rows();
    }
    Standardizer st;
    st.mean.resize(d);
    st.stddev.resize(d);
    for (std::size_t c = 0; c < d; ++c) st.mean[c] = sum[c] / static_cast<double>(n);
    for (const auto& s : seqs) {
      for (std::size_t t = 0; t < s.rows(); ++t) {
        for (std::size_t c = 0; c < d; ++c) {
          const double e = s.at(t, c) - st.mean[c];
          sq[c] += e * e;
        }
      }
    }
    for (std::size_t c = 0; c < d; ++c) st.stddev[c] = std::max(std::sqrt(sq[c] / static_cast<double>(n)), std_floor);
    return st;
  }

  static Standardizer identity(std::size_t d) { return {std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)}; }

  std::size_t dim() const noexcept { return mean.size(); }

  Tensor apply(const Tensor& x) const {
    check(x);
    Tensor out = x;
    for (std::size_t t = 0; t < x.rows(); ++t) {
      for (std::size_t c = 0; c < dim(); ++c) out.at(t, c) = (x.at(t, c) - mean[c]) / stddev[c];
    }
    return out;
  }

  Tensor invert(const Tensor& x) const {
    check(x);
    Tensor out = x;
    for (std::size_t t = 0; t < x.rows(); ++t) {
      for (std::size_t c = 0; c < dim(); ++c) out.at(t, c) = x.at(t, c) * stddev[c] + mean[c];
    }
    return out;
  }

  /// Stored as a [2, D] tensor: row 0 mean, row 1 stddev.
  Tensor pack() const {
    Tensor t({2, dim()});
    for (std::size_t c = 0; c < dim(); ++c) {
      t.at(0, c) = mean[c];
      t.at(1, c) = stddev[c];
    }
    return t;
  }

  static Standardizer unpack(const Tensor& t) {
    if (t.rank() != 2 || t.rows() != 2) throw ShapeError("standardizer: expected [2,D], got " + shape_str(t.shape()));
    Standardizer s;
    for (std::size_t c = 0; c < t.cols(); ++c) {
      s.mean.push_back(t.at(0, c));
      s.stddev.push_back(t.at(1, c));
    }
    return s;
  }

 private:
  void check(const Tensor& x) const {
    if (x.rank() != 2 || x.cols() != dim()) {
      throw ShapeError("standardizer: expected width " + std::to_string(dim()) + ", got " + shape_str(x.shape()));
    }
  }
};

}  // namespace mlat::motion
