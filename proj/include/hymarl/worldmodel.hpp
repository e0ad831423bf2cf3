#pragma once

#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "hymarl/comms.hpp"
#include "hymarl/graph.hpp"
#include "hymarl/nn.hpp"
#include "hymarl/optim.hpp"
#include "hymarl/params.hpp"
#include "hymarl/rng.hpp"

namespace hymarl {

inline constexpr double kLogvarLo = -10.0;
inline constexpr double kLogvarHi = 4.0;
inline constexpr double kModelLr = 1e-3;
inline constexpr double kModelGradClip = 1.0;
inline constexpr int kModelBatch = 32;
inline constexpr int kModelBufferEpisodes = 5000;
inline constexpr int kModelHiddenDefault = 128;

/// Centralized next-step predictor: one LSTM trunk over the concatenated
/// joint observation, one linear head per agent emitting mean and
/// log-variance of that agent's observation delta.
template <class T>
struct PredictiveModel {
  std::vector<int> obs_dims;
  std::vector<int> offsets;  // slot start per agent within the flat vector
  int input_dim = 0;
  int hidden = kModelHiddenDefault;
  ParamStore<T> params;

  static PredictiveModel make(const std::vector<int>& obs_dims, int hidden, SplitRng& rng) {
    PredictiveModel m;
    m.obs_dims = obs_dims;
    m.hidden = hidden;
    for (int d : obs_dims) {
      m.offsets.push_back(m.input_dim);
      m.input_dim += d;
    }
    add_lstm(m.params, "trunk", m.input_dim, hidden, rng);
    for (std::size_t i = 0; i < obs_dims.size(); ++i)
      add_linear(m.params, "head" + std::to_string(i), hidden, 2 * obs_dims[i], rng);
    return m;
  }

  int n_agents() const { return static_cast<int>(obs_dims.size()); }
};

template <class T>
struct ModelState {
  Tensor<T> h, c;  // [b x hidden]

  static ModelState zero(int b, int hidden) {
    return {Tensor<T>::zeros({b, hidden}), Tensor<T>::zeros({b, hidden})};
  }
};

template <class T>
struct ModelParamNodes {
  LstmNodes<T> trunk;
  std::vector<LinearNodes<T>> heads;
};

template <class T>
ModelParamNodes<T> model_param_nodes(Graph<T>& g, const PredictiveModel<T>& m) {
  ModelParamNodes<T> n{lstm_nodes(g, m.params, "trunk"), {}};
  for (int i = 0; i < m.n_agents(); ++i)
    n.heads.push_back(linear_nodes(g, m.params, "head" + std::to_string(i)));
  return n;
}

template <class T>
struct ModelStepNodes {
  NodeRef<T> mean, logvar;  // [b x input_dim] each, agent blocks concatenated
  NodeRef<T> h, c;
};

/// One recorded recurrent step. Log-variances are clamped to a fixed range
/// so the NLL stays finite whatever the head emits.
template <class T>
ModelStepNodes<T> model_step_nodes(Graph<T>& g, const PredictiveModel<T>& m,
                                   const ModelParamNodes<T>& pn, NodeRef<T> o_joint, NodeRef<T> h,
                                   NodeRef<T> c) {
  if (g.value(o_joint).cols() != m.input_dim)
    throw ShapeError("model forward: joint observation dim " + g.value(o_joint).shape_str() +
                     " does not match model input " + std::to_string(m.input_dim));
  auto [h2, c2] = lstm_cell(g, pn.trunk, o_joint, h, c);
  std::vector<NodeRef<T>> means, logvars;
  for (int i = 0; i < m.n_agents(); ++i) {
    NodeRef<T> out = linear(g, pn.heads[i], h2);
    int d = m.obs_dims[i];
    means.push_back(g.slice_cols(out, 0, d));
    logvars.push_back(g.clamp(g.slice_cols(out, d, 2 * d), kLogvarLo, kLogvarHi));
  }
  return {g.concat_cols(means), g.concat_cols(logvars), h2, c2};
}

/// Value-level forward for execution paths: (means, logvars, new state).
template <class T>
std::tuple<Tensor<T>, Tensor<T>, ModelState<T>> model_forward(const PredictiveModel<T>& m,
                                                              const Tensor<T>& o_joint,
                                                              const ModelState<T>& st) {
  Graph<T> g;
  ModelParamNodes<T> pn = model_param_nodes(g, m);
  ModelStepNodes<T> out =
      model_step_nodes(g, m, pn, g.constant(o_joint), g.constant(st.h), g.constant(st.c));
  return {g.value(out.mean), g.value(out.logvar), ModelState<T>{g.value(out.h), g.value(out.c)}};
}

/// One stored episode: rows o_0..o_{T-1} and the matching next-step deltas.
template <class T>
struct ModelEpisode {
  Tensor<T> obs;    // [T x D]
  Tensor<T> delta;  // [T x D], delta[t] = o_{t+1} - o_t

  int length() const { return obs.rows(); }
};

/// Flattens a joint observation (per-agent vectors) into one model row.
template <class T>
std::vector<T> flatten_joint(const std::vector<std::vector<double>>& joint) {
  std::vector<T> flat;
  for (const auto& o : joint)
    for (double v : o) flat.push_back(static_cast<T>(v));
  return flat;
}

/// Builds an episode from the raw observation stream o_0..o_T (T+1 entries).
template <class T>
ModelEpisode<T> make_model_episode(const std::vector<std::vector<std::vector<double>>>& obs_stream) {
  if (obs_stream.size() < 2) throw std::invalid_argument("model episode needs at least 2 observations");
  std::vector<std::vector<T>> rows;
  for (const auto& joint : obs_stream) rows.push_back(flatten_joint<T>(joint));
  int steps = static_cast<int>(rows.size()) - 1;
  int d = static_cast<int>(rows[0].size());
  ModelEpisode<T> ep{Tensor<T>::zeros({steps, d}), Tensor<T>::zeros({steps, d})};
  for (int t = 0; t < steps; ++t) {
    if (static_cast<int>(rows[t + 1].size()) != d)
      throw std::invalid_argument("model episode: ragged observation stream");
    for (int k = 0; k < d; ++k) {
      ep.obs.at(t, k) = rows[t][k];
      ep.delta.at(t, k) = rows[t + 1][k] - rows[t][k];
    }
  }
  return ep;
}

/// FIFO ring of whole episodes.
template <class T>
class ModelBuffer {
 public:
  explicit ModelBuffer(int capacity = kModelBufferEpisodes) : capacity_(capacity) {}

  void push(ModelEpisode<T> ep) {
    episodes_.push_back(std::move(ep));
    if (static_cast<int>(episodes_.size()) > capacity_) episodes_.pop_front();
  }

  int size() const { return static_cast<int>(episodes_.size()); }
  const ModelEpisode<T>& at(int i) const { return episodes_[i]; }

 private:
  int capacity_;
  std::deque<ModelEpisode<T>> episodes_;
};

/// Recorded NLL over a batch of episodes, zero-initialized state, padded to
/// the longest episode with zero-weight rows. Returns the loss node holding
/// sum over dims, averaged over all (episode, step) pairs.
template <class T>
NodeRef<T> model_loss_nodes(Graph<T>& g, const PredictiveModel<T>& m,
                            const std::vector<const ModelEpisode<T>*>& batch) {
  if (batch.empty()) throw std::invalid_argument("model loss: empty batch");
  int b = static_cast<int>(batch.size());
  int max_len = 0;
  int total_steps = 0;
  for (const auto* ep : batch) {
    if (ep->length() < 1) throw std::invalid_argument("model loss: empty episode");
    if (ep->obs.cols() != m.input_dim) throw ShapeError("model loss: episode dim mismatch");
    require_same_shape(ep->obs, ep->delta, "model_loss");
    max_len = std::max(max_len, ep->length());
    total_steps += ep->length();
  }
  ModelParamNodes<T> pn = model_param_nodes(g, m);
  NodeRef<T> h = g.constant(Tensor<T>::zeros({b, m.hidden}));
  NodeRef<T> c = g.constant(Tensor<T>::zeros({b, m.hidden}));
  NodeRef<T> loss = g.constant(Tensor<T>::zeros({1, 1}));
  for (int t = 0; t < max_len; ++t) {
    Tensor<T> o = Tensor<T>::zeros({b, m.input_dim});
    Tensor<T> target = Tensor<T>::zeros({b, m.input_dim});
    Tensor<T> weight = Tensor<T>::zeros({b, m.input_dim});
    for (int e = 0; e < b; ++e) {
      if (t >= batch[e]->length()) continue;
      for (int k = 0; k < m.input_dim; ++k) {
        o.at(e, k) = batch[e]->obs.at(t, k);
        target.at(e, k) = batch[e]->delta.at(t, k);
        weight.at(e, k) = T(1);
      }
    }
    ModelStepNodes<T> step = model_step_nodes(g, m, pn, g.constant(std::move(o)), h, c);
    h = step.h;
    c = step.c;
    loss = g.add(loss, g.gaussian_nll_weighted(step.mean, step.logvar, std::move(target),
                                               std::move(weight)));
  }
  return g.scale(loss, 1.0 / total_steps);
}

/// Loss of a single episode (the batch case averaged over one).
template <class T>
double model_loss(const PredictiveModel<T>& m, const ModelEpisode<T>& ep) {
  Graph<T> g;
  return static_cast<double>(g.value(model_loss_nodes(g, m, {&ep})).data[0]);
}

/// One optimization step on a sampled batch; returns the batch loss, or
/// nothing while the buffer is still warming up (no parameter change).
template <class T>
std::optional<double> train_model_step(PredictiveModel<T>& m, const ModelBuffer<T>& buffer,
                                       AdamState<T>& opt, SplitRng& rng, int batch_size = kModelBatch,
                                       double lr = kModelLr, double grad_clip = kModelGradClip) {
  if (buffer.size() < batch_size) return std::nullopt;
  std::vector<const ModelEpisode<T>*> batch;
  for (int k = 0; k < batch_size; ++k) batch.push_back(&buffer.at(rng.uniform_int(buffer.size())));
  Graph<T> g;
  NodeRef<T> loss = model_loss_nodes(g, m, batch);
  g.backward(loss);
  GradVec<T> grads = g.grads_for(m.params);
  if (grad_clip > 0) clip_global_norm(grads, grad_clip);
  adam_step(m.params, grads, opt, lr);
  return static_cast<double>(g.value(loss).data[0]);
}

/// Execution-time imputation: keeps an agent-local hidden state and a stored
/// next-step point estimate; absent slots in each incoming view are filled
/// from that estimate before the next recurrent update.
template <class T>
class AgentModelInstance {
 public:
  AgentModelInstance(const PredictiveModel<T>* model, int agent) : model_(model), agent_(agent) {
    if (agent < 0 || agent >= model->n_agents())
      throw std::out_of_range("model instance: bad agent index");
  }

  void reset() {
    state_ = ModelState<T>::zero(1, model_->hidden);
    next_pred_ = Tensor<T>::zeros({1, model_->input_dim});
    has_pred_ = false;
    ready_ = true;
  }

  /// Completes the masked view, advances the recurrent state on the
  /// completed vector, and returns the per-agent completed observation.
  std::vector<std::vector<double>> step(const SharedView& view) {
    if (!ready_) throw std::logic_error("model instance used before reset");
    if (static_cast<int>(view.present.size()) != model_->n_agents())
      throw std::invalid_argument("model instance: view arity mismatch");
    if (!view.present[agent_])
      throw std::logic_error("model instance: own observation missing from view");

    Tensor<T> completed = Tensor<T>::zeros({1, model_->input_dim});
    for (int j = 0; j < model_->n_agents(); ++j) {
      int off = model_->offsets[j];
      int d = model_->obs_dims[j];
      if (view.present[j]) {
        if (static_cast<int>(view.obs[j].size()) != d)
          throw std::invalid_argument("model instance: slot dim mismatch");
        for (int k = 0; k < d; ++k) completed.at(0, off + k) = static_cast<T>(view.obs[j][k]);
      } else {
        if (!has_pred_) throw std::logic_error("model instance: no prediction to impute from");
        for (int k = 0; k < d; ++k) completed.at(0, off + k) = next_pred_.at(0, off + k);
      }
    }

    auto [mean, logvar, st] = model_forward(*model_, completed, state_);
    (void)logvar;
    state_ = st;
    for (int k = 0; k < model_->input_dim; ++k)
      next_pred_.at(0, k) = completed.at(0, k) + mean.at(0, k);
    has_pred_ = true;
    return split_joint(completed);
  }

  /// Auto-regressive k-step prediction from cloned state; the instance
  /// itself is left untouched and real observations are never consulted.
  std::vector<std::vector<std::vector<double>>> rollout_predict(int k) const {
    if (k < 1) throw std::invalid_argument("rollout_predict: k must be >= 1");
    if (!has_pred_) throw std::logic_error("rollout_predict: instance has not processed a step");
    std::vector<std::vector<std::vector<double>>> out;
    Tensor<T> cur = next_pred_;
    ModelState<T> st = state_;
    out.push_back(split_joint(cur));
    for (int i = 1; i < k; ++i) {
      auto [mean, logvar, st2] = model_forward(*model_, cur, st);
      (void)logvar;
      st = st2;
      for (int kk = 0; kk < model_->input_dim; ++kk) cur.at(0, kk) += mean.at(0, kk);
      out.push_back(split_joint(cur));
    }
    return out;
  }

  int agent() const { return agent_; }
  const ModelState<T>& state() const { return state_; }
  bool has_prediction() const { return has_pred_; }
  const Tensor<T>& next_prediction() const { return next_pred_; }

 private:
  std::vector<std::vector<double>> split_joint(const Tensor<T>& flat) const {
    std::vector<std::vector<double>> out;
    for (int j = 0; j < model_->n_agents(); ++j) {
      std::vector<double> o(model_->obs_dims[j]);
      for (int k = 0; k < model_->obs_dims[j]; ++k)
        o[k] = static_cast<double>(flat.at(0, model_->offsets[j] + k));
      out.push_back(std::move(o));
    }
    return out;
  }

  const PredictiveModel<T>* model_;
  int agent_;
  ModelState<T> state_;
  Tensor<T> next_pred_;
  bool has_pred_ = false;
  bool ready_ = false;
};

}  // namespace hymarl
