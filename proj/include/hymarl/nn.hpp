#pragma once

#include <string>
#include <utility>

#include "hymarl/graph.hpp"
#include "hymarl/params.hpp"
#include "hymarl/rng.hpp"
#include "hymarl/tensor.hpp"

namespace hymarl {

// Layer parameters live in a ParamStore under "<prefix>.w" style names so a
// whole network checkpoints and target-copies as one store. The *_nodes
// helpers pull the parameter leaves into a graph once; unrolled loops reuse
// the same leaves so per-step gradients accumulate.

template <class T>
void add_linear(ParamStore<T>& ps, const std::string& prefix, int in, int out, SplitRng& rng) {
  ps.add(prefix + ".w", init_uniform_fanin<T>(in, out, rng));
  ps.add(prefix + ".b", Tensor<T>::zeros({1, out}));
}

template <class T>
void add_gru(ParamStore<T>& ps, const std::string& prefix, int in, int hidden, SplitRng& rng) {
  ps.add(prefix + ".wx", init_uniform_fanin<T>(in, 3 * hidden, rng));
  ps.add(prefix + ".wh", init_uniform_fanin<T>(hidden, 3 * hidden, rng));
  ps.add(prefix + ".b", Tensor<T>::zeros({1, 3 * hidden}));
}

template <class T>
void add_lstm(ParamStore<T>& ps, const std::string& prefix, int in, int hidden, SplitRng& rng) {
  ps.add(prefix + ".wx", init_uniform_fanin<T>(in, 4 * hidden, rng));
  ps.add(prefix + ".wh", init_uniform_fanin<T>(hidden, 4 * hidden, rng));
  Tensor<T>& b = ps.add(prefix + ".b", Tensor<T>::zeros({1, 4 * hidden}));
  for (int j = hidden; j < 2 * hidden; ++j) b.data[j] = T(1);  // forget gate starts open
}

template <class T>
struct LinearNodes {
  NodeRef<T> w, b;
};

template <class T>
LinearNodes<T> linear_nodes(Graph<T>& g, const ParamStore<T>& ps, const std::string& prefix) {
  return {g.param(ps, prefix + ".w"), g.param(ps, prefix + ".b")};
}

/// Frozen-weight variant (target networks): values enter the graph as
/// constants, so no gradients flow and no bindings are recorded.
template <class T>
LinearNodes<T> linear_nodes_const(Graph<T>& g, const ParamStore<T>& ps, const std::string& prefix) {
  return {g.constant(ps.at(prefix + ".w")), g.constant(ps.at(prefix + ".b"))};
}

template <class T>
NodeRef<T> linear(Graph<T>& g, const LinearNodes<T>& p, NodeRef<T> x) {
  return g.add_rowvec(g.matmul(x, p.w), p.b);
}

template <class T>
NodeRef<T> linear(Graph<T>& g, const ParamStore<T>& ps, const std::string& prefix, NodeRef<T> x) {
  return linear(g, linear_nodes(g, ps, prefix), x);
}

template <class T>
struct GruNodes {
  NodeRef<T> wx, wh, b;
  int hidden;
};

template <class T>
GruNodes<T> gru_nodes(Graph<T>& g, const ParamStore<T>& ps, const std::string& prefix) {
  GruNodes<T> n{g.param(ps, prefix + ".wx"), g.param(ps, prefix + ".wh"), g.param(ps, prefix + ".b"), 0};
  n.hidden = g.value(n.wh).rows();
  return n;
}

template <class T>
GruNodes<T> gru_nodes_const(Graph<T>& g, const ParamStore<T>& ps, const std::string& prefix) {
  GruNodes<T> n{g.constant(ps.at(prefix + ".wx")), g.constant(ps.at(prefix + ".wh")),
                g.constant(ps.at(prefix + ".b")), 0};
  n.hidden = g.value(n.wh).rows();
  return n;
}

/// Gate layout r|z|n. New hidden state is z*h + (1-z)*n, so an update gate
/// saturated at 1 carries the old state through unchanged.
template <class T>
NodeRef<T> gru_cell(Graph<T>& g, const GruNodes<T>& p, NodeRef<T> x, NodeRef<T> h) {
  int H = p.hidden;
  NodeRef<T> gx = g.add_rowvec(g.matmul(x, p.wx), p.b);
  NodeRef<T> gh = g.matmul(h, p.wh);
  NodeRef<T> r = g.sigmoid(g.add(g.slice_cols(gx, 0, H), g.slice_cols(gh, 0, H)));
  NodeRef<T> z = g.sigmoid(g.add(g.slice_cols(gx, H, 2 * H), g.slice_cols(gh, H, 2 * H)));
  NodeRef<T> n = g.tanh_op(g.add(g.slice_cols(gx, 2 * H, 3 * H), g.mul(r, g.slice_cols(gh, 2 * H, 3 * H))));
  return g.add(g.mul(z, h), g.mul(g.one_minus(z), n));
}

template <class T>
NodeRef<T> gru_cell(Graph<T>& g, const ParamStore<T>& ps, const std::string& prefix, NodeRef<T> x,
                    NodeRef<T> h) {
  return gru_cell(g, gru_nodes(g, ps, prefix), x, h);
}

template <class T>
struct LstmNodes {
  NodeRef<T> wx, wh, b;
  int hidden;
};

template <class T>
LstmNodes<T> lstm_nodes(Graph<T>& g, const ParamStore<T>& ps, const std::string& prefix) {
  LstmNodes<T> n{g.param(ps, prefix + ".wx"), g.param(ps, prefix + ".wh"), g.param(ps, prefix + ".b"), 0};
  n.hidden = g.value(n.wh).rows();
  return n;
}

/// Gate layout i|f|g|o; returns (h', c').
template <class T>
std::pair<NodeRef<T>, NodeRef<T>> lstm_cell(Graph<T>& g, const LstmNodes<T>& p, NodeRef<T> x,
                                            NodeRef<T> h, NodeRef<T> c) {
  int H = p.hidden;
  NodeRef<T> s = g.add(g.add_rowvec(g.matmul(x, p.wx), p.b), g.matmul(h, p.wh));
  NodeRef<T> i = g.sigmoid(g.slice_cols(s, 0, H));
  NodeRef<T> f = g.sigmoid(g.slice_cols(s, H, 2 * H));
  NodeRef<T> cand = g.tanh_op(g.slice_cols(s, 2 * H, 3 * H));
  NodeRef<T> o = g.sigmoid(g.slice_cols(s, 3 * H, 4 * H));
  NodeRef<T> c_new = g.add(g.mul(f, c), g.mul(i, cand));
  NodeRef<T> h_new = g.mul(o, g.tanh_op(c_new));
  return {h_new, c_new};
}

template <class T>
std::pair<NodeRef<T>, NodeRef<T>> lstm_cell(Graph<T>& g, const ParamStore<T>& ps,
                                            const std::string& prefix, NodeRef<T> x, NodeRef<T> h,
                                            NodeRef<T> c) {
  return lstm_cell(g, lstm_nodes(g, ps, prefix), x, h, c);
}

}  // namespace hymarl
