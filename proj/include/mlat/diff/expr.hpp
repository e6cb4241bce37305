#pragma once

// Expression graphs over dense tensors with reverse-mode differentiation.
//
// An Expr is an immutable DAG node. Building an expression only records the primitive and
// infers its output shape (shape errors surface here, naming the primitive and both shapes);
// values are produced by an Evaluator bound to a ParamStore, which memoizes per node until the
// store changes.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mlat/core/errors.hpp"
#include "mlat/core/tensor.hpp"
#include "mlat/diff/param_store.hpp"

namespace mlat {

enum class Op {
  Constant,
  Parameter,
  Add,
  Sub,
  Mul,
  Affine,  // a*x + b with scalar attributes
  MatMul,
  Transpose,
  Relu,
  Gelu,
  Exp,
  Log,
  Clamp,
  SoftmaxRows,
  RmsNormRows,
  Concat,
  Slice,
  ReduceSum,
  ReduceMean,
  SmoothL1,
  BroadcastRows,
  StopGradient,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::Constant: return "constant";
    case Op::Parameter: return "parameter";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Affine: return "affine";
    case Op::MatMul: return "matmul";
    case Op::Transpose: return "transpose";
    case Op::Relu: return "relu";
    case Op::Gelu: return "gelu";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Clamp: return "clamp";
    case Op::SoftmaxRows: return "softmax-rows";
    case Op::RmsNormRows: return "rms-norm";
    case Op::Concat: return "concat";
    case Op::Slice: return "slice";
    case Op::ReduceSum: return "reduce-sum";
    case Op::ReduceMean: return "reduce-mean";
    case Op::SmoothL1: return "smooth-l1";
    case Op::BroadcastRows: return "broadcast";
    case Op::StopGradient: return "stop-gradient";
  }
  return "?";
}

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
  Op op = Op::Constant;
  std::vector<NodePtr> inputs;
  Shape shape;
  Tensor constant;   // Constant
  std::string name;  // Parameter
  double a = 0.0;    // Affine scale, Clamp low, RmsNorm eps, SmoothL1 beta
  double b = 0.0;    // Affine offset, Clamp high
  std::size_t axis = 0;
  std::size_t begin = 0;  // Slice begin, BroadcastRows count
  std::size_t end = 0;
};

class Expr {
 public:
  Expr() = default;
  explicit Expr(NodePtr node) : node_(std::move(node)) {}

  const Node& node() const { return *node_; }
  const NodePtr& ptr() const noexcept { return node_; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rows() const { return node_->shape.size() == 2 ? node_->shape[0] : 1; }
  std::size_t cols() const { return node_->shape.empty() ? 1 : node_->shape.back(); }
  bool valid() const noexcept { return node_ != nullptr; }

 private:
  NodePtr node_;
};

namespace detail {

inline Expr make(Op op, std::vector<NodePtr> inputs, Shape shape) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->inputs = std::move(inputs);
  n->shape = std::move(shape);
  return Expr(std::move(n));
}

inline Expr make_with(Op op, std::vector<NodePtr> inputs, Shape shape, double a, double b = 0.0,
                      std::size_t axis = 0, std::size_t begin = 0, std::size_t end = 0) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->inputs = std::move(inputs);
  n->shape = std::move(shape);
  n->a = a;
  n->b = b;
  n->axis = axis;
  n->begin = begin;
  n->end = end;
  return Expr(std::move(n));
}

[[noreturn]] inline void shape_fail(Op op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op_name(op)) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

inline void require_rank2(Op op, const Shape& s) {
  if (s.size() != 2) throw ShapeError(std::string(op_name(op)) + ": expected a matrix, got " + shape_str(s));
}

inline Expr binary(Op op, const Expr& x, const Expr& y) {
  if (x.shape() != y.shape()) shape_fail(op, x.shape(), y.shape());
  return make(op, {x.ptr(), y.ptr()}, x.shape());
}

inline Expr unary(Op op, const Expr& x) { return make(op, {x.ptr()}, x.shape()); }

}  // namespace detail

// ---------------------------------------------------------------------------------------------
// Primitive constructors.

inline Expr constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->op = Op::Constant;
  n->shape = value.shape();
  n->constant = std::move(value);
  return Expr(std::move(n));
}

inline Expr scalar(double v) { return constant(Tensor::scalar(v)); }

/// Parameter reference with a declared shape; resolved by name at evaluation time.
inline Expr parameter(const std::string& name, Shape shape) {
  auto n = std::make_shared<Node>();
  n->op = Op::Parameter;
  n->name = name;
  n->shape = std::move(shape);
  return Expr(std::move(n));
}

/// Parameter reference taking its declared shape from `store`.
inline Expr parameter(const ParamStore& store, const std::string& name) {
  return parameter(name, store.get(name).shape());
}

inline Expr add(const Expr& x, const Expr& y) { return detail::binary(Op::Add, x, y); }
inline Expr sub(const Expr& x, const Expr& y) { return detail::binary(Op::Sub, x, y); }
inline Expr mul(const Expr& x, const Expr& y) { return detail::binary(Op::Mul, x, y); }

inline Expr affine(const Expr& x, double scale, double offset = 0.0) {
  return detail::make_with(Op::Affine, {x.ptr()}, x.shape(), scale, offset);
}
inline Expr scale(const Expr& x, double s) { return affine(x, s, 0.0); }
inline Expr neg(const Expr& x) { return affine(x, -1.0, 0.0); }
inline Expr square(const Expr& x) { return mul(x, x); }

inline Expr matmul(const Expr& x, const Expr& y) {
  detail::require_rank2(Op::MatMul, x.shape());
  detail::require_rank2(Op::MatMul, y.shape());
  if (x.shape()[1] != y.shape()[0]) detail::shape_fail(Op::MatMul, x.shape(), y.shape());
  return detail::make(Op::MatMul, {x.ptr(), y.ptr()}, Shape{x.shape()[0], y.shape()[1]});
}

inline Expr transpose(const Expr& x) {
  detail::require_rank2(Op::Transpose, x.shape());
  return detail::make(Op::Transpose, {x.ptr()}, Shape{x.shape()[1], x.shape()[0]});
}

inline Expr relu(const Expr& x) { return detail::unary(Op::Relu, x); }
/// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
inline Expr gelu(const Expr& x) { return detail::unary(Op::Gelu, x); }
inline Expr exp(const Expr& x) { return detail::unary(Op::Exp, x); }
inline Expr log(const Expr& x) { return detail::unary(Op::Log, x); }

inline Expr clamp(const Expr& x, double lo, double hi) {
  if (!(lo <= hi)) throw InvalidArgument("clamp: low bound exceeds high bound");
  return detail::make_with(Op::Clamp, {x.ptr()}, x.shape(), lo, hi);
}

inline Expr softmax_rows(const Expr& x) {
  if (x.shape().empty()) throw ShapeError("softmax-rows: scalar input");
  return detail::unary(Op::SoftmaxRows, x);
}

/// x / sqrt(mean(x^2) + eps) per row (no gain).
inline Expr rms_norm_rows(const Expr& x, double eps = 1e-6) {
  if (x.shape().empty()) throw ShapeError("rms-norm: scalar input");
  return detail::make_with(Op::RmsNormRows, {x.ptr()}, x.shape(), eps);
}

inline Expr concat(const std::vector<Expr>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape out = parts.front().shape();
  if (axis >= out.size()) throw ShapeError("concat: axis out of range for " + shape_str(out));
  out[axis] = 0;
  std::vector<NodePtr> in;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != out.size()) detail::shape_fail(Op::Concat, parts.front().shape(), s);
    for (std::size_t k = 0; k < s.size(); ++k) {
      if (k != axis && s[k] != parts.front().shape()[k]) detail::shape_fail(Op::Concat, parts.front().shape(), s);
    }
    out[axis] += s[axis];
    in.push_back(p.ptr());
  }
  return detail::make_with(Op::Concat, std::move(in), out, 0.0, 0.0, axis);
}

inline Expr slice(const Expr& x, std::size_t axis, std::size_t begin, std::size_t end) {
  Shape out = x.shape();
  if (axis >= out.size() || begin > end || end > out[axis]) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                     std::to_string(axis) + " of " + shape_str(out));
  }
  out[axis] = end - begin;
  return detail::make_with(Op::Slice, {x.ptr()}, out, 0.0, 0.0, axis, begin, end);
}

inline Expr reduce_sum(const Expr& x) { return detail::make(Op::ReduceSum, {x.ptr()}, Shape{}); }
inline Expr reduce_mean(const Expr& x) { return detail::make(Op::ReduceMean, {x.ptr()}, Shape{}); }

/// Mean over elements of 0.5 d^2 (|d| < beta) or |d| - 0.5 beta, d = pred - target.
inline Expr smooth_l1(const Expr& pred, const Expr& target, double beta = 1.0) {
  if (pred.shape() != target.shape()) detail::shape_fail(Op::SmoothL1, pred.shape(), target.shape());
  if (!(beta > 0.0)) throw InvalidArgument("smooth-l1: beta must be positive");
  return detail::make_with(Op::SmoothL1, {pred.ptr(), target.ptr()}, Shape{}, beta);
}

/// Repeats a row ([n] or [1,n]) `count` times into [count, n].
inline Expr broadcast_rows(const Expr& row, std::size_t count) {
  const Shape& s = row.shape();
  const bool ok = (s.size() == 1) || (s.size() == 2 && s[0] == 1);
  if (!ok) throw ShapeError("broadcast: expected a row vector, got " + shape_str(s));
  return detail::make_with(Op::BroadcastRows, {row.ptr()}, Shape{count, s.back()}, 0.0, 0.0, 0, count);
}

/// Identity in the forward pass; blocks gradient flow to everything upstream.
inline Expr stop_gradient(const Expr& x) { return detail::unary(Op::StopGradient, x); }

// Convenience composites.
inline Expr mse(const Expr& pred, const Expr& target) { return reduce_mean(square(sub(pred, target))); }

inline Expr add_row(const Expr& x, const Expr& row) { return add(x, broadcast_rows(row, x.rows())); }
inline Expr mul_row(const Expr& x, const Expr& row) { return mul(x, broadcast_rows(row, x.rows())); }

// ---------------------------------------------------------------------------------------------
// Evaluation.

struct Gradients {
  double value = 0.0;
  std::map<std::string, Tensor> grads;
  /// Requested parameters that do not occur in the graph; their entry in `grads` is zero.
  std::set<std::string> missing;
};

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using MapM = Eigen::Map<RowMat>;

inline MapC mat(const Tensor& t) {
  return MapC(t.raw().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
inline MapM mat(Tensor& t) {
  return MapM(t.raw().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluK = 0.044715;

inline void split_axis(const Shape& s, std::size_t axis, std::size_t& outer, std::size_t& inner) {
  outer = 1;
  inner = 1;
  for (std::size_t k = 0; k < axis; ++k) outer *= s[k];
  for (std::size_t k = axis + 1; k < s.size(); ++k) inner *= s[k];
}

inline std::size_t row_len(const Shape& s) { return s.empty() ? 1 : s.back(); }

}  // namespace detail

/// Evaluates expressions against a parameter store, memoizing node values. The memo is
/// dropped whenever the store's version changes.
class Evaluator {
 public:
  explicit Evaluator(const ParamStore& store) : store_(&store), version_(store.version()) {}

  const Tensor& value(const Expr& e) {
    sync();
    roots_.push_back(e.ptr());  // memo keys stay valid while their graph is alive
    for (const Node* n : topo_order(e.ptr().get())) {
      if (!memo_.count(n)) memo_.emplace(n, forward(*n));
    }
    return memo_.at(e.ptr().get());
  }

  /// Reverse-mode gradient of a scalar expression w.r.t. named parameters.
  Gradients gradient(const Expr& root, const std::vector<std::string>& wrt) {
    const Tensor& out = value(root);
    if (out.size() != 1) {
      throw InvalidArgument("gradient: root must be scalar, got " + shape_str(root.shape()));
    }
    Gradients result;
    result.value = out[0];
    const std::set<std::string> wanted(wrt.begin(), wrt.end());

    const auto order = topo_order(root.ptr().get());
    // needs[n]: some requested parameter is reachable from n without crossing a stop-gradient.
    std::unordered_map<const Node*, bool> needs;
    needs.reserve(order.size());
    std::set<std::string> seen;
    for (const Node* n : order) {
      bool need = false;
      if (n->op == Op::Parameter) {
        need = wanted.count(n->name) != 0;
        if (need) seen.insert(n->name);
      } else if (n->op != Op::StopGradient && n->op != Op::Constant) {
        for (const auto& in : n->inputs) need = need || needs[in.get()];
      }
      needs[n] = need;
    }

    std::unordered_map<const Node*, Tensor> adj;
    adj.reserve(order.size());
    if (needs[root.ptr().get()]) adj.emplace(root.ptr().get(), Tensor(root.shape(), 1.0));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const Node* n = *it;
      auto ait = adj.find(n);
      if (ait == adj.end()) continue;
      if (n->op == Op::Parameter) {
        auto [git, inserted] = result.grads.try_emplace(n->name, ait->second);
        if (!inserted) {
          for (std::size_t i = 0; i < git->second.size(); ++i) git->second[i] += ait->second[i];
        }
        continue;
      }
      backward(*n, ait->second, needs, adj);
      adj.erase(ait);
    }

    for (const auto& name : wanted) {
      if (!seen.count(name)) result.missing.insert(name);
      // Unreachable (absent, or only behind stop-gradient) parameters get an exact zero.
      if (!result.grads.count(name)) result.grads.emplace(name, Tensor(store_->get(name).shape()));
    }
    return result;
  }

 private:
  void sync() {
    if (store_->version() != version_) {
      memo_.clear();
      roots_.clear();
      version_ = store_->version();
    }
  }

  static std::vector<const Node*> topo_order(const Node* root) {
    std::vector<const Node*> order;
    std::unordered_map<const Node*, char> state;  // 1 = on stack, 2 = done
    std::vector<std::pair<const Node*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    state[root] = 1;
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->inputs.size()) {
        const Node* child = n->inputs[next++].get();
        auto s = state.find(child);
        if (s == state.end()) {
          state[child] = 1;
          stack.emplace_back(child, 0);
        } else if (s->second == 1) {
          throw InvalidArgument("expression graph contains a cycle");
        }
      } else {
        state[n] = 2;
        order.push_back(n);
        stack.pop_back();
      }
    }
    return order;
  }

  const Tensor& in(const Node& n, std::size_t i) const { return memo_.at(n.inputs[i].get()); }

  Tensor forward(const Node& n) const {
    using namespace detail;
    switch (n.op) {
      case Op::Constant: return n.constant;
      case Op::Parameter: {
        const Tensor& p = store_->get(n.name);
        if (p.shape() != n.shape) {
          throw ShapeError("parameter '" + n.name + "': expression expects " + shape_str(n.shape) +
                           ", store holds " + shape_str(p.shape()));
        }
        return p;
      }
      case Op::Add:
      case Op::Sub:
      case Op::Mul: {
        const Tensor& x = in(n, 0);
        const Tensor& y = in(n, 1);
        Tensor out(n.shape);
        for (std::size_t i = 0; i < out.size(); ++i) {
          out[i] = n.op == Op::Add ? x[i] + y[i] : n.op == Op::Sub ? x[i] - y[i] : x[i] * y[i];
        }
        return out;
      }
      case Op::Affine: {
        Tensor out = in(n, 0);
        for (auto& v : out.values()) v = n.a * v + n.b;
        return out;
      }
      case Op::MatMul: {
        Tensor out(n.shape);
        mat(out).noalias() = mat(in(n, 0)) * mat(in(n, 1));
        return out;
      }
      case Op::Transpose: {
        Tensor out(n.shape);
        mat(out) = mat(in(n, 0)).transpose();
        return out;
      }
      case Op::Relu: {
        Tensor out = in(n, 0);
        for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
        return out;
      }
      case Op::Gelu: {
        Tensor out = in(n, 0);
        for (auto& v : out.values()) v = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluK * v * v * v)));
        return out;
      }
      case Op::Exp: {
        Tensor out = in(n, 0);
        for (auto& v : out.values()) v = std::exp(v);
        return out;
      }
      case Op::Log: {
        Tensor out = in(n, 0);
        for (auto& v : out.values()) v = std::log(v);
        return out;
      }
      case Op::Clamp: {
        Tensor out = in(n, 0);
        for (auto& v : out.values()) v = std::clamp(v, n.a, n.b);
        return out;
      }
      case Op::SoftmaxRows: {
        Tensor out = in(n, 0);
        const std::size_t c = row_len(n.shape);
        for (std::size_t r = 0; r < out.size() / c; ++r) {
          double* row = out.raw().data() + r * c;
          const double mx = *std::max_element(row, row + c);
          double sum = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
          }
          for (std::size_t j = 0; j < c; ++j) row[j] /= sum;
        }
        return out;
      }
      case Op::RmsNormRows: {
        Tensor out = in(n, 0);
        const std::size_t c = row_len(n.shape);
        for (std::size_t r = 0; r < out.size() / c; ++r) {
          double* row = out.raw().data() + r * c;
          double ms = 0.0;
          for (std::size_t j = 0; j < c; ++j) ms += row[j] * row[j];
          const double inv = 1.0 / std::sqrt(ms / static_cast<double>(c) + n.a);
          for (std::size_t j = 0; j < c; ++j) row[j] *= inv;
        }
        return out;
      }
      case Op::Concat: {
        Tensor out(n.shape);
        std::size_t outer, inner;
        split_axis(n.shape, n.axis, outer, inner);
        const std::size_t out_stride = n.shape[n.axis] * inner;
        std::size_t offset = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const Tensor& x = in(n, k);
          const std::size_t chunk = x.shape()[n.axis] * inner;
          for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(x.raw().data() + o * chunk, chunk, out.raw().data() + o * out_stride + offset);
          }
          offset += chunk;
        }
        return out;
      }
      case Op::Slice: {
        const Tensor& x = in(n, 0);
        Tensor out(n.shape);
        std::size_t outer, inner;
        split_axis(x.shape(), n.axis, outer, inner);
        const std::size_t src_stride = x.shape()[n.axis] * inner;
        const std::size_t chunk = (n.end - n.begin) * inner;
        for (std::size_t o = 0; o < outer; ++o) {
          std::copy_n(x.raw().data() + o * src_stride + n.begin * inner, chunk, out.raw().data() + o * chunk);
        }
        return out;
      }
      case Op::ReduceSum:
      case Op::ReduceMean: {
        const Tensor& x = in(n, 0);
        double s = 0.0;
        for (double v : x.values()) s += v;
        if (n.op == Op::ReduceMean) s /= static_cast<double>(x.size());
        return Tensor::scalar(s);
      }
      case Op::SmoothL1: {
        const Tensor& p = in(n, 0);
        const Tensor& t = in(n, 1);
        double s = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
          const double d = std::abs(p[i] - t[i]);
          s += d < n.a ? 0.5 * d * d / n.a : d - 0.5 * n.a;
        }
        return Tensor::scalar(s / static_cast<double>(p.size()));
      }
      case Op::BroadcastRows: {
        const Tensor& x = in(n, 0);
        Tensor out(n.shape);
        const std::size_t c = x.size();
        for (std::size_t r = 0; r < n.begin; ++r) std::copy_n(x.raw().data(), c, out.raw().data() + r * c);
        return out;
      }
      case Op::StopGradient: return in(n, 0);
    }
    throw InvalidArgument("unknown primitive");
  }

  void accumulate(std::unordered_map<const Node*, Tensor>& adj, const NodePtr& target, Tensor g) const {
    auto [it, inserted] = adj.try_emplace(target.get(), std::move(g));
    if (!inserted) {
      Tensor& acc = it->second;
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
    }
  }

  void backward(const Node& n, const Tensor& g, std::unordered_map<const Node*, bool>& needs,
                std::unordered_map<const Node*, Tensor>& adj) const {
    using namespace detail;
    auto need = [&](std::size_t i) { return needs[n.inputs[i].get()]; };
    const Tensor& y = memo_.at(&n);
    switch (n.op) {
      case Op::Constant:
      case Op::Parameter:
      case Op::StopGradient: return;
      case Op::Add:
        if (need(0)) accumulate(adj, n.inputs[0], g);
        if (need(1)) accumulate(adj, n.inputs[1], g);
        return;
      case Op::Sub:
        if (need(0)) accumulate(adj, n.inputs[0], g);
        if (need(1)) {
          Tensor d = g;
          for (auto& v : d.values()) v = -v;
          accumulate(adj, n.inputs[1], std::move(d));
        }
        return;
      case Op::Mul:
        for (std::size_t k = 0; k < 2; ++k) {
          if (!need(k)) continue;
          const Tensor& other = in(n, 1 - k);
          Tensor d(n.shape);
          for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[i] * other[i];
          accumulate(adj, n.inputs[k], std::move(d));
        }
        return;
      case Op::Affine: {
        Tensor d = g;
        for (auto& v : d.values()) v *= n.a;
        accumulate(adj, n.inputs[0], std::move(d));
        return;
      }
      case Op::MatMul: {
        const Tensor& x = in(n, 0);
        const Tensor& w = in(n, 1);
        if (need(0)) {
          Tensor d(x.shape());
          mat(d).noalias() = mat(g) * mat(w).transpose();
          accumulate(adj, n.inputs[0], std::move(d));
        }
        if (need(1)) {
          Tensor d(w.shape());
          mat(d).noalias() = mat(x).transpose() * mat(g);
          accumulate(adj, n.inputs[1], std::move(d));
        }
        return;
      }
      case Op::Transpose: {
        Tensor d(n.inputs[0]->shape);
        mat(d) = mat(g).transpose();
        accumulate(adj, n.inputs[0], std::move(d));
        return;
      }
      case Op::Relu: {
        const Tensor& x = in(n, 0);
        Tensor d = g;
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = x[i] > 0.0 ? d[i] : 0.0;
        accumulate(adj, n.inputs[0], std::move(d));
        return;
      }
      case Op::Gelu: {
        const Tensor& x = in(n, 0);
        Tensor d = g;
        for (std::size_t i = 0; i < d.size(); ++i) {
          const double v = x[i];
          const double th = std::tanh(kGeluC * (v + kGeluK * v * v * v));
          const double dth = (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluK * v * v);
          d[i] *= 0.5 * (1.0 + th) + 0.5 * v * dth;
        }
        accumulate(adj, n.inputs[0], std::move(d));
        return;
      }
      case Op::Exp: {
        Tensor d = g;
        for (std::size_t i = 0; i < d.size(); ++i) d[i] *= y[i];
        accumulate(adj, n.inputs[0], std::move(d));
        return;
      }
      case Op::Log: {
        const Tensor& x = in(n, 0);
        Tensor d = g;
        for (std::size_t i = 0; i < d.size(); ++i) d[i] /= x[i];
        accumulate(adj, n.inputs[0], std::move(d));
        return;
      }
      case Op::Clamp: {
        const Tensor& x = in(n, 0);
        Tensor d = g;
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = (x[i] >= n.a && x[i] <= n.b) ? d[i] : 0.0;
        accumulate(adj, n.inputs[0], std::move(d));
        return;
      }
      case Op::SoftmaxRows: {
        Tensor d = g;
        const std::size_t c = row_len(n.shape);
        for (std::size_t r = 0; r < d.size() / c; ++r) {
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) dot += g[r * c + j] * y[r * c + j];
          for (std::size_t j = 0; j < c; ++j) d[r * c + j] = y[r * c + j] * (g[r * c + j] - dot);
        }
        accumulate(adj, n.inputs[0], std::move(d));
        return;
      }
      case Op::RmsNormRows: {
        const Tensor& x = in(n, 0);
        Tensor d = g;
        const std::size_t c = row_len(n.shape);
        for (std::size_t r = 0; r < d.size() / c; ++r) {
          double ms = 0.0;
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            ms += x[r * c + j] * x[r * c + j];
            dot += g[r * c + j] * y[r * c + j];
          }
          const double inv = 1.0 / std::sqrt(ms / static_cast<double>(c) + n.a);
          dot /= static_cast<double>(c);
          for (std::size_t j = 0; j < c; ++j) d[r * c + j] = inv * (g[r * c + j] - y[r * c + j] * dot);
        }
        accumulate(adj, n.inputs[0], std::move(d));
        return;
      }
      case Op::Concat: {
        std::size_t outer, inner;
        split_axis(n.shape, n.axis, outer, inner);
        const std::size_t out_stride = n.shape[n.axis] * inner;
        std::size_t offset = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const Shape& s = n.inputs[k]->shape;
          const std::size_t chunk = s[n.axis] * inner;
          if (need(k)) {
            Tensor d(s);
            for (std::size_t o = 0; o < outer; ++o) {
              std::copy_n(g.raw().data() + o * out_stride + offset, chunk, d.raw().data() + o * chunk);
            }
            accumulate(adj, n.inputs[k], std::move(d));
          }
          offset += chunk;
        }
        return;
      }
      case Op::Slice: {
        const Shape& s = n.inputs[0]->shape;
        Tensor d(s);
        std::size_t outer, inner;
        split_axis(s, n.axis, outer, inner);
        const std::size_t src_stride = s[n.axis] * inner;
        const std::size_t chunk = (n.end - n.begin) * inner;
        for (std::size_t o = 0; o < outer; ++o) {
          std::copy_n(g.raw().data() + o * chunk, chunk, d.raw().data() + o * src_stride + n.begin * inner);
        }
        accumulate(adj, n.inputs[0], std::move(d));
        return;
      }
      case Op::ReduceSum:
      case Op::ReduceMean: {
        const Shape& s = n.inputs[0]->shape;
        double v = g[0];
        if (n.op == Op::ReduceMean) v /= static_cast<double>(shape_size(s));
        accumulate(adj, n.inputs[0], Tensor(s, v));
        return;
      }
      case Op::SmoothL1: {
        const Tensor& p = in(n, 0);
        const Tensor& t = in(n, 1);
        Tensor d(p.shape());
        const double scale = g[0] / static_cast<double>(p.size());
        for (std::size_t i = 0; i < d.size(); ++i) {
          const double diff = p[i] - t[i];
          const double slope = std::abs(diff) < n.a ? diff / n.a : (diff > 0.0 ? 1.0 : -1.0);
          d[i] = scale * slope;
        }
        if (need(1)) {
          Tensor dt = d;
          for (auto& v : dt.values()) v = -v;
          accumulate(adj, n.inputs[1], std::move(dt));
        }
        if (need(0)) accumulate(adj, n.inputs[0], std::move(d));
        return;
      }
      case Op::BroadcastRows: {
        const Shape& s = n.inputs[0]->shape;
        Tensor d(s);
        const std::size_t c = d.size();
        for (std::size_t r = 0; r < n.begin; ++r) {
          for (std::size_t j = 0; j < c; ++j) d[j] += g[r * c + j];
        }
        accumulate(adj, n.inputs[0], std::move(d));
        return;
      }
    }
  }

  const ParamStore* store_;
  std::uint64_t version_;
  std::unordered_map<const Node*, Tensor> memo_;
  std::vector<NodePtr> roots_;
};

/// Forward value of `expr` under `bindings`.
inline Tensor evaluate(const Expr& expr, const ParamStore& bindings) {
  Evaluator ev(bindings);
  return ev.value(expr);
}

/// Reverse-mode gradients of a scalar `expr` w.r.t. `wrt`.
inline Gradients gradient(const Expr& expr, const ParamStore& bindings, const std::vector<std::string>& wrt) {
  Evaluator ev(bindings);
  return ev.gradient(expr, wrt);
}

}  // namespace mlat
