#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "hymarl/params.hpp"
#include "hymarl/tensor.hpp"

namespace hymarl {

inline constexpr double kLogTwoPi = 1.8378770664093454836;

template <class T>
struct NodeRef {
  int idx = -1;
};

/// Reverse-mode tape over eagerly evaluated tensor operations. Each op
/// records its output value and a backward closure; recording order is a
/// topological order, so one reverse sweep visits every op exactly once.
template <class T>
class Graph {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Map = Eigen::Map<Mat>;
  using CMap = Eigen::Map<const Mat>;

 public:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated lazily in backward()
    bool needs_grad = false;
    std::function<void(Graph&)> back;
  };

  void clear() {
    nodes_.clear();
    bindings_.clear();
  }

  const Tensor<T>& value(NodeRef<T> n) const { return nodes_[n.idx].value; }
  const Tensor<T>& grad(NodeRef<T> n) const { return nodes_[n.idx].grad; }
  bool needs_grad(NodeRef<T> n) const { return nodes_[n.idx].needs_grad; }

  NodeRef<T> constant(Tensor<T> v) { return push(std::move(v), false, {}); }

  /// Registers a parameter leaf; gradients accumulated against it are later
  /// retrievable via grads_for(store) keyed exactly like the store.
  NodeRef<T> param(const ParamStore<T>& store, const std::string& name) {
    int pi = store.index_of(name);
    NodeRef<T> n = push(store.at(pi), true, {});
    bindings_.push_back({&store, pi, n.idx});
    return n;
  }

  NodeRef<T> matmul(NodeRef<T> a, NodeRef<T> b) {
    const Tensor<T>& A = val(a);
    const Tensor<T>& B = val(b);
    if (A.cols() != B.rows())
      throw ShapeError("matmul: inner extents differ " + A.shape_str() + " vs " + B.shape_str());
    Tensor<T> out = Tensor<T>::zeros({A.rows(), B.cols()});
    map(out).noalias() = cmap(A) * cmap(B);
    return push(std::move(out), ng(a) || ng(b), [a, b](Graph& g) {
      auto go = g.cmap(g.nodes_[g.last_].grad);
      if (g.ng(a)) g.map(g.nodes_[a.idx].grad).noalias() += go * g.cmap(g.val(b)).transpose();
      if (g.ng(b)) g.map(g.nodes_[b.idx].grad).noalias() += g.cmap(g.val(a)).transpose() * go;
    });
  }

  NodeRef<T> add(NodeRef<T> a, NodeRef<T> b) {
    require_same_shape(val(a), val(b), "add");
    Tensor<T> out = val(a);
    const auto& bd = val(b).data;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += bd[i];
    return push(std::move(out), ng(a) || ng(b), [a, b](Graph& g) {
      const auto& go = g.nodes_[g.last_].grad.data;
      if (g.ng(a)) g.axpy(a, go);
      if (g.ng(b)) g.axpy(b, go);
    });
  }

  NodeRef<T> sub(NodeRef<T> a, NodeRef<T> b) {
    require_same_shape(val(a), val(b), "sub");
    Tensor<T> out = val(a);
    const auto& bd = val(b).data;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bd[i];
    return push(std::move(out), ng(a) || ng(b), [a, b](Graph& g) {
      const auto& go = g.nodes_[g.last_].grad.data;
      if (g.ng(a)) g.axpy(a, go);
      if (g.ng(b)) {
        auto& gb = g.nodes_[b.idx].grad.data;
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
      }
    });
  }

  NodeRef<T> mul(NodeRef<T> a, NodeRef<T> b) {
    require_same_shape(val(a), val(b), "mul");
    Tensor<T> out = val(a);
    const auto& bd = val(b).data;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bd[i];
    return push(std::move(out), ng(a) || ng(b), [a, b](Graph& g) {
      const auto& go = g.nodes_[g.last_].grad.data;
      if (g.ng(a)) {
        auto& ga = g.nodes_[a.idx].grad.data;
        const auto& bv = g.val(b).data;
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv[i];
      }
      if (g.ng(b)) {
        auto& gb = g.nodes_[b.idx].grad.data;
        const auto& av = g.val(a).data;
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * av[i];
      }
    });
  }

  NodeRef<T> scale(NodeRef<T> a, double c) {
    Tensor<T> out = val(a);
    for (auto& v : out.data) v = static_cast<T>(v * c);
    return push(std::move(out), ng(a), [a, c](Graph& g) {
      if (!g.ng(a)) return;
      const auto& go = g.nodes_[g.last_].grad.data;
      auto& ga = g.nodes_[a.idx].grad.data;
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += static_cast<T>(go[i] * c);
    });
  }

  /// [m x n] + [1 x n], broadcast over rows.
  NodeRef<T> add_rowvec(NodeRef<T> a, NodeRef<T> v) {
    const Tensor<T>& A = val(a);
    const Tensor<T>& V = val(v);
    if (V.rows() != 1 || V.cols() != A.cols())
      throw ShapeError("add_rowvec: want [1x" + std::to_string(A.cols()) + "], got " + V.shape_str());
    Tensor<T> out = A;
    for (int r = 0; r < A.rows(); ++r)
      for (int c = 0; c < A.cols(); ++c) out.at(r, c) += V.at(0, c);
    return push(std::move(out), ng(a) || ng(v), [a, v](Graph& g) {
      const Tensor<T>& go = g.nodes_[g.last_].grad;
      if (g.ng(a)) g.axpy(a, go.data);
      if (g.ng(v)) {
        Tensor<T>& gv = g.nodes_[v.idx].grad;
        for (int r = 0; r < go.rows(); ++r)
          for (int c = 0; c < go.cols(); ++c) gv.at(0, c) += go.at(r, c);
      }
    });
  }

  NodeRef<T> one_minus(NodeRef<T> a) {
    Tensor<T> out = val(a);
    for (auto& x : out.data) x = T(1) - x;
    return push(std::move(out), ng(a), [a](Graph& g) {
      if (!g.ng(a)) return;
      const auto& go = g.nodes_[g.last_].grad.data;
      auto& ga = g.nodes_[a.idx].grad.data;
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] -= go[i];
    });
  }

  NodeRef<T> sigmoid(NodeRef<T> a) {
    Tensor<T> out = val(a);
    for (auto& x : out.data) x = T(1) / (T(1) + std::exp(-x));
    return unary_from_output(a, std::move(out), [](T y, T) { return y * (T(1) - y); });
  }

  NodeRef<T> tanh_op(NodeRef<T> a) {
    Tensor<T> out = val(a);
    for (auto& x : out.data) x = std::tanh(x);
    return unary_from_output(a, std::move(out), [](T y, T) { return T(1) - y * y; });
  }

  NodeRef<T> relu(NodeRef<T> a) {
    Tensor<T> out = val(a);
    for (auto& x : out.data) x = x > T(0) ? x : T(0);
    return unary_from_output(a, std::move(out), [](T, T x) { return x > T(0) ? T(1) : T(0); }, a);
  }

  NodeRef<T> elu(NodeRef<T> a) {
    Tensor<T> out = val(a);
    for (auto& x : out.data) x = x > T(0) ? x : std::expm1(x);
    return unary_from_output(a, std::move(out), [](T y, T x) { return x > T(0) ? T(1) : y + T(1); }, a);
  }

  NodeRef<T> abs_op(NodeRef<T> a) {
    Tensor<T> out = val(a);
    for (auto& x : out.data) x = std::abs(x);
    return unary_from_output(
        a, std::move(out), [](T, T x) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); }, a);
  }

  /// Elementwise clamp; gradient passes only strictly inside the interval.
  NodeRef<T> clamp(NodeRef<T> a, double lo, double hi) {
    Tensor<T> out = val(a);
    for (auto& x : out.data) x = std::min(std::max(x, static_cast<T>(lo)), static_cast<T>(hi));
    return unary_from_output(
        a, std::move(out),
        [lo, hi](T, T x) { return (x > static_cast<T>(lo) && x < static_cast<T>(hi)) ? T(1) : T(0); }, a);
  }

  NodeRef<T> slice_cols(NodeRef<T> a, int c0, int c1) {
    const Tensor<T>& A = val(a);
    if (c0 < 0 || c1 > A.cols() || c0 >= c1) throw ShapeError("slice_cols: bad range");
    Tensor<T> out = Tensor<T>::zeros({A.rows(), c1 - c0});
    for (int r = 0; r < A.rows(); ++r)
      for (int c = c0; c < c1; ++c) out.at(r, c - c0) = A.at(r, c);
    return push(std::move(out), ng(a), [a, c0, c1](Graph& g) {
      if (!g.ng(a)) return;
      const Tensor<T>& go = g.nodes_[g.last_].grad;
      Tensor<T>& ga = g.nodes_[a.idx].grad;
      for (int r = 0; r < go.rows(); ++r)
        for (int c = c0; c < c1; ++c) ga.at(r, c) += go.at(r, c - c0);
    });
  }

  NodeRef<T> concat_cols(const std::vector<NodeRef<T>>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: empty");
    int rows = val(parts[0]).rows();
    int cols = 0;
    for (auto p : parts) {
      if (val(p).rows() != rows) throw ShapeError("concat_cols: row mismatch");
      cols += val(p).cols();
    }
    Tensor<T> out = Tensor<T>::zeros({rows, cols});
    bool any = false;
    int off = 0;
    for (auto p : parts) {
      const Tensor<T>& P = val(p);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < P.cols(); ++c) out.at(r, off + c) = P.at(r, c);
      off += P.cols();
      any = any || ng(p);
    }
    return push(std::move(out), any, [parts](Graph& g) {
      const Tensor<T>& go = g.nodes_[g.last_].grad;
      int off = 0;
      for (auto p : parts) {
        const Tensor<T>& P = g.val(p);
        if (g.ng(p)) {
          Tensor<T>& gp = g.nodes_[p.idx].grad;
          for (int r = 0; r < go.rows(); ++r)
            for (int c = 0; c < P.cols(); ++c) gp.at(r, c) += go.at(r, off + c);
        }
        off += P.cols();
      }
    });
  }

  NodeRef<T> sum_all(NodeRef<T> a) {
    T s = 0;
    for (T x : val(a).data) s += x;
    return push(Tensor<T>::matrix(1, 1, {s}), ng(a), [a](Graph& g) {
      if (!g.ng(a)) return;
      T go = g.nodes_[g.last_].grad.data[0];
      for (auto& v : g.nodes_[a.idx].grad.data) v += go;
    });
  }

  /// sum(a .* w) with w held constant.
  NodeRef<T> weighted_sum(NodeRef<T> a, Tensor<T> w) {
    require_same_shape(val(a), w, "weighted_sum");
    T s = 0;
    for (std::size_t i = 0; i < w.data.size(); ++i) s += val(a).data[i] * w.data[i];
    auto wp = std::make_shared<Tensor<T>>(std::move(w));
    return push(Tensor<T>::matrix(1, 1, {s}), ng(a), [a, wp](Graph& g) {
      if (!g.ng(a)) return;
      T go = g.nodes_[g.last_].grad.data[0];
      auto& ga = g.nodes_[a.idx].grad.data;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go * wp->data[i];
    });
  }

  /// Picks one column per row: out[r,0] = a[r, cols[r]].
  NodeRef<T> gather_cols(NodeRef<T> a, std::vector<int> cols) {
    const Tensor<T>& A = val(a);
    if (static_cast<int>(cols.size()) != A.rows()) throw ShapeError("gather_cols: index count != rows");
    Tensor<T> out = Tensor<T>::zeros({A.rows(), 1});
    for (int r = 0; r < A.rows(); ++r) {
      if (cols[r] < 0 || cols[r] >= A.cols()) throw ShapeError("gather_cols: index out of range");
      out.at(r, 0) = A.at(r, cols[r]);
    }
    auto cp = std::make_shared<std::vector<int>>(std::move(cols));
    return push(std::move(out), ng(a), [a, cp](Graph& g) {
      if (!g.ng(a)) return;
      const Tensor<T>& go = g.nodes_[g.last_].grad;
      Tensor<T>& ga = g.nodes_[a.idx].grad;
      for (int r = 0; r < go.rows(); ++r) ga.at(r, (*cp)[r]) += go.at(r, 0);
    });
  }

  /// Per-row vector-matrix product: A is [m x n], W holds a row-major
  /// [n x e] matrix per row; out[r,:] = A[r,:] * W[r].
  NodeRef<T> bmm_vec(NodeRef<T> a, NodeRef<T> w, int n, int e) {
    const Tensor<T>& A = val(a);
    const Tensor<T>& W = val(w);
    if (A.cols() != n || W.cols() != n * e || W.rows() != A.rows())
      throw ShapeError("bmm_vec: extents do not conform");
    Tensor<T> out = Tensor<T>::zeros({A.rows(), e});
    for (int r = 0; r < A.rows(); ++r)
      for (int i = 0; i < n; ++i) {
        T av = A.at(r, i);
        for (int j = 0; j < e; ++j) out.at(r, j) += av * W.at(r, i * e + j);
      }
    return push(std::move(out), ng(a) || ng(w), [a, w, n, e](Graph& g) {
      const Tensor<T>& go = g.nodes_[g.last_].grad;
      const Tensor<T>& A = g.val(a);
      const Tensor<T>& W = g.val(w);
      for (int r = 0; r < go.rows(); ++r)
        for (int i = 0; i < n; ++i) {
          if (g.ng(a)) {
            T s = 0;
            for (int j = 0; j < e; ++j) s += go.at(r, j) * W.at(r, i * e + j);
            g.nodes_[a.idx].grad.at(r, i) += s;
          }
          if (g.ng(w)) {
            T av = A.at(r, i);
            for (int j = 0; j < e; ++j) g.nodes_[w.idx].grad.at(r, i * e + j) += av * go.at(r, j);
          }
        }
    });
  }

  /// Diagonal-Gaussian negative log-likelihood, summed over all elements:
  /// sum_k 0.5*(logvar + (target-mean)^2*exp(-logvar) + log(2*pi)).
  NodeRef<T> gaussian_nll(NodeRef<T> mean, NodeRef<T> logvar, Tensor<T> target) {
    require_same_shape(val(mean), val(logvar), "gaussian_nll");
    require_same_shape(val(mean), target, "gaussian_nll");
    const auto& mu = val(mean).data;
    const auto& lv = val(logvar).data;
    T s = 0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      T d = target.data[i] - mu[i];
      s += static_cast<T>(0.5) * (lv[i] + d * d * std::exp(-lv[i]) + static_cast<T>(kLogTwoPi));
    }
    auto tp = std::make_shared<Tensor<T>>(std::move(target));
    return push(Tensor<T>::matrix(1, 1, {s}), ng(mean) || ng(logvar), [mean, logvar, tp](Graph& g) {
      T go = g.nodes_[g.last_].grad.data[0];
      const auto& mu = g.val(mean).data;
      const auto& lv = g.val(logvar).data;
      for (std::size_t i = 0; i < mu.size(); ++i) {
        T d = tp->data[i] - mu[i];
        T inv_var = std::exp(-lv[i]);
        if (g.ng(mean)) g.nodes_[mean.idx].grad.data[i] += go * (-d * inv_var);
        if (g.ng(logvar))
          g.nodes_[logvar.idx].grad.data[i] += go * static_cast<T>(0.5) * (T(1) - d * d * inv_var);
      }
    });
  }

  /// gaussian_nll with a constant per-element weight (0/1 row masks for
  /// padded batches, or fractional weights): sum_k w_k * nll_k.
  NodeRef<T> gaussian_nll_weighted(NodeRef<T> mean, NodeRef<T> logvar, Tensor<T> target,
                                   Tensor<T> weight) {
    require_same_shape(val(mean), val(logvar), "gaussian_nll_weighted");
    require_same_shape(val(mean), target, "gaussian_nll_weighted");
    require_same_shape(val(mean), weight, "gaussian_nll_weighted");
    const auto& mu = val(mean).data;
    const auto& lv = val(logvar).data;
    T s = 0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      T d = target.data[i] - mu[i];
      s += weight.data[i] * static_cast<T>(0.5) *
           (lv[i] + d * d * std::exp(-lv[i]) + static_cast<T>(kLogTwoPi));
    }
    auto tp = std::make_shared<Tensor<T>>(std::move(target));
    auto wp = std::make_shared<Tensor<T>>(std::move(weight));
    return push(Tensor<T>::matrix(1, 1, {s}), ng(mean) || ng(logvar), [mean, logvar, tp, wp](Graph& g) {
      T go = g.nodes_[g.last_].grad.data[0];
      const auto& mu = g.val(mean).data;
      const auto& lv = g.val(logvar).data;
      for (std::size_t i = 0; i < mu.size(); ++i) {
        T d = tp->data[i] - mu[i];
        T inv_var = std::exp(-lv[i]);
        T w = wp->data[i];
        if (g.ng(mean)) g.nodes_[mean.idx].grad.data[i] += go * w * (-d * inv_var);
        if (g.ng(logvar))
          g.nodes_[logvar.idx].grad.data[i] += go * w * static_cast<T>(0.5) * (T(1) - d * d * inv_var);
      }
    });
  }

  /// Masked mean squared error: sum(mask*(pred-target)^2) / max(sum(mask),1).
  NodeRef<T> masked_mse(NodeRef<T> pred, Tensor<T> target, Tensor<T> mask) {
    require_same_shape(val(pred), target, "masked_mse");
    require_same_shape(val(pred), mask, "masked_mse");
    T denom = 0;
    for (T m : mask.data) denom += m;
    if (denom < T(1)) denom = T(1);
    const auto& p = val(pred).data;
    T s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      T d = p[i] - target.data[i];
      s += mask.data[i] * d * d;
    }
    s /= denom;
    auto tp = std::make_shared<Tensor<T>>(std::move(target));
    auto mp = std::make_shared<Tensor<T>>(std::move(mask));
    return push(Tensor<T>::matrix(1, 1, {s}), ng(pred), [pred, tp, mp, denom](Graph& g) {
      if (!g.ng(pred)) return;
      T go = g.nodes_[g.last_].grad.data[0];
      const auto& p = g.val(pred).data;
      auto& gp = g.nodes_[pred.idx].grad.data;
      for (std::size_t i = 0; i < p.size(); ++i)
        gp[i] += go * T(2) * mp->data[i] * (p[i] - tp->data[i]) / denom;
    });
  }

  /// Reverse sweep from a scalar loss. Visits every recorded op once, in
  /// reverse recording order.
  void backward(NodeRef<T> loss) {
    if (val(loss).numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
    for (auto& n : nodes_)
      if (n.needs_grad) {
        n.grad = Tensor<T>::zeros(n.value.shape);
      }
    nodes_[loss.idx].grad.data[0] = T(1);
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      if (nodes_[i].needs_grad && nodes_[i].back) {
        last_ = i;
        nodes_[i].back(*this);
      }
    }
  }

  /// Gradients keyed like the store; zeros for parameters that did not
  /// participate in the loss.
  std::vector<Tensor<T>> grads_for(const ParamStore<T>& store) const {
    std::vector<Tensor<T>> out;
    out.reserve(store.size());
    for (int i = 0; i < store.size(); ++i) out.push_back(Tensor<T>::zeros(store.at(i).shape));
    for (const auto& b : bindings_) {
      if (b.store != &store) continue;
      const Tensor<T>& g = nodes_[b.node].grad;
      if (g.data.empty()) continue;  // backward never ran over this leaf
      auto& acc = out[b.param].data;
      for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += g.data[k];
    }
    return out;
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Binding {
    const ParamStore<T>* store;
    int param;
    int node;
  };

  NodeRef<T> push(Tensor<T> value, bool needs, std::function<void(Graph&)> back) {
    nodes_.push_back(Node{std::move(value), {}, needs, std::move(back)});
    return NodeRef<T>{static_cast<int>(nodes_.size()) - 1};
  }

  const Tensor<T>& val(NodeRef<T> n) const { return nodes_[n.idx].value; }
  bool ng(NodeRef<T> n) const { return nodes_[n.idx].needs_grad; }

  void axpy(NodeRef<T> n, const std::vector<T>& src) {
    auto& dst = nodes_[n.idx].grad.data;
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
  }

  // Unary op whose local derivative is a function of (output, input) values.
  template <class D>
  NodeRef<T> unary_from_output(NodeRef<T> a, Tensor<T> out, D deriv, NodeRef<T> input_for_deriv = NodeRef<T>{-1}) {
    int self_input = input_for_deriv.idx;
    return push(std::move(out), ng(a), [a, deriv, self_input](Graph& g) {
      if (!g.ng(a)) return;
      int out_idx = g.last_;
      const auto& go = g.nodes_[out_idx].grad.data;
      const auto& y = g.nodes_[out_idx].value.data;
      const auto& x = self_input >= 0 ? g.nodes_[self_input].value.data : y;
      auto& ga = g.nodes_[a.idx].grad.data;
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * deriv(y[i], x[i]);
    });
  }

  Map map(Tensor<T>& t) { return Map(t.data.data(), t.rows(), t.cols()); }
  CMap cmap(const Tensor<T>& t) const { return CMap(t.data.data(), t.rows(), t.cols()); }

  std::vector<Node> nodes_;
  std::vector<Binding> bindings_;
  int last_ = -1;  // node whose backward closure is currently running
};

}  // namespace hymarl
