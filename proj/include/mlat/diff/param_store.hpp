#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mlat/core/errors.hpp"
#include "mlat/core/rng.hpp"
#include "mlat/core/tensor.hpp"

namespace mlat {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Named parameter tensors plus AdamW moments. Iteration order is lexicographic by name,
/// which keeps optimizer updates and checkpoints deterministic.
class ParamStore {
 public:
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  const Tensor& get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw UnresolvedParameter("unresolved parameter '" + name + "'");
    return it->second;
  }

  /// Mutable access bumps the version so cached evaluations are discarded.
  Tensor& mutable_get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw UnresolvedParameter("unresolved parameter '" + name + "'");
    ++version_;
    return it->second;
  }

  void set(const std::string& name, Tensor value) {
    params_[name] = std::move(value);
    ++version_;
  }

  /// Creates the parameter with `init` unless it already exists (shapes must then agree).
  const Tensor& declare(const std::string& name, const Shape& shape, const std::function<Tensor()>& init) {
    auto it = params_.find(name);
    if (it != params_.end()) {
      if (it->second.shape() != shape) {
        throw ShapeError("parameter '" + name + "' declared as " + shape_str(shape) + " but stored as " +
                         shape_str(it->second.shape()));
      }
      return it->second;
    }
    ++version_;
    return params_.emplace(name, init()).first->second;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [k, _] : params_) out.push_back(k);
    return out;
  }

  /// Names starting with any of the prefixes.
  std::vector<std::string> names_with_prefix(const std::vector<std::string>& prefixes) const {
    std::vector<std::string> out;
    for (const auto& [k, _] : params_) {
      for (const auto& p : prefixes) {
        if (k.rfind(p, 0) == 0) {
          out.push_back(k);
          break;
        }
      }
    }
    return out;
  }

  std::size_t parameter_count(const std::vector<std::string>& names) const {
    std::size_t n = 0;
    for (const auto& k : names) n += get(k).size();
    return n;
  }

  const std::map<std::string, Tensor>& params() const noexcept { return params_; }

  // Optimizer state.
  std::uint64_t step() const noexcept { return step_; }
  void set_step(std::uint64_t s) noexcept { step_ = s; }
  std::map<std::string, Tensor>& first_moments() noexcept { return m_; }
  std::map<std::string, Tensor>& second_moments() noexcept { return v_; }
  const std::map<std::string, Tensor>& first_moments() const noexcept { return m_; }
  const std::map<std::string, Tensor>& second_moments() const noexcept { return v_; }

  std::uint64_t version() const noexcept { return version_; }

 private:
  std::map<std::string, Tensor> params_;
  std::map<std::string, Tensor> m_;
  std::map<std::string, Tensor> v_;
  std::uint64_t step_ = 0;
  std::uint64_t version_ = 0;
};

/// lr * min(1, step / warmup); `step` is the 1-based index of the update being applied.
inline double warmup_lr(double lr, std::uint64_t step, std::uint64_t warmup) {
  if (warmup == 0) return lr;
  return lr * std::min(1.0, static_cast<double>(step) / static_cast<double>(warmup));
}

/// One AdamW update over every parameter named in `grads`. A non-finite gradient aborts the
/// whole step before anything is modified.
inline void adamw_step(ParamStore& store, const std::map<std::string, Tensor>& grads, double lr,
                       const AdamWConfig& cfg = {}) {
  for (const auto& [name, g] : grads) {
    const Tensor& p = store.get(name);
    if (g.shape() != p.shape()) {
      throw ShapeError("adamw: gradient for '" + name + "' is " + shape_str(g.shape()) + ", parameter is " +
                       shape_str(p.shape()));
    }
    if (!g.all_finite()) throw NumericalError("adamw: non-finite gradient for parameter '" + name + "'");
  }
  const std::uint64_t t = store.step() + 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (const auto& [name, g] : grads) {
    Tensor& p = store.mutable_get(name);
    auto [mit, m_new] = store.first_moments().try_emplace(name, Tensor(p.shape()));
    auto [vit, v_new] = store.second_moments().try_emplace(name, Tensor(p.shape()));
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * p[i]);
    }
  }
  store.set_step(t);
}

/// Rescales all gradients jointly so their global L2 norm is at most `max_norm` (0 disables).
/// Returns the norm before clipping.
inline double clip_grad_norm(std::map<std::string, Tensor>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [_, g] : grads) {
    for (double v : g.values()) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& [_, g] : grads) {
      for (auto& v : g.values()) v *= f;
    }
  }
  return norm;
}

// Initializers.
inline std::function<Tensor()> init_zeros(const Shape& shape) {
  return [shape] { return Tensor(shape); };
}

inline std::function<Tensor()> init_constant(const Shape& shape, double v) {
  return [shape, v] { return Tensor(shape, v); };
}

inline std::function<Tensor()> init_normal(const Shape& shape, double stddev, Rng& rng) {
  return [shape, stddev, &rng] { return rng.normal_tensor(shape, stddev); };
}

}  // namespace mlat
