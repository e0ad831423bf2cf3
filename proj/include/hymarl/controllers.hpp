#pragma once

/// Value-based controllers: recurrent per-agent Q-networks trained by
/// episode-batch TD, either independently (IQL) or through a monotonic
/// mixing network over a global state (QMIX). Targets come from frozen
/// copies of the online networks that are hard-synced on a fixed cadence.

#include <algorithm>
#include <cmath>
#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "comms.hpp"
#include "graph.hpp"
#include "nn.hpp"
#include "optim.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace hymarl {

inline constexpr int kCtrlHiddenDefault = 256;
inline constexpr double kGammaDefault = 0.99;
inline constexpr double kEpsStart = 1.0;
inline constexpr double kEpsEnd = 0.05;
inline constexpr long long kTargetIntervalDefault = 200;
inline constexpr int kReplayEpisodesDefault = 5000;
inline constexpr int kRlBatchDefault = 32;
inline constexpr int kMixEmbedDefault = 32;
inline constexpr int kMixHyperHiddenDefault = 64;
inline constexpr double kRewardVarEps = 1e-6;

/// Training-time hyperparameters shared by both trainers. grad_clip <= 0
/// leaves controller gradients unclipped.
struct RlConfig {
  double lr = 5e-4;
  double gamma = kGammaDefault;
  long long target_interval = kTargetIntervalDefault;
  double grad_clip = 0.0;
  bool reward_standardisation = true;
};

/// Linear exploration schedule over environment steps; eval uses 0 directly.
struct EpsilonSchedule {
  double start = kEpsStart;
  double end = kEpsEnd;
  long long anneal_steps = 50000;

  double at(long long env_step) const {
    if (anneal_steps <= 0 || env_step >= anneal_steps) return end;
    if (env_step <= 0) return start;
    return start + (end - start) * static_cast<double>(env_step) / static_cast<double>(anneal_steps);
  }
};

/// Running reward statistics (Welford). standardize() maps a raw reward to
/// (r - mean)/sqrt(var + 1e-6); with a single observed reward this is 0.
/// Update only from training-time rewards, never from evaluation rollouts.
struct RewardStats {
  long long count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void update(double r) {
    ++count;
    double d = r - mean;
    mean += d / static_cast<double>(count);
    m2 += d * (r - mean);
  }
  double variance() const { return count > 0 ? m2 / static_cast<double>(count) : 0.0; }
  double standardize(double r) const {
    if (count == 0) return 0.0;
    return (r - mean) / std::sqrt(variance() + kRewardVarEps);
  }
};

/// Recurrent Q-network: one GRU layer over the per-step input followed by a
/// linear head to one value per discrete action.
template <class T>
struct QNet {
  int in_dim = 0;
  int hidden = 0;
  int n_actions = 0;
  ParamStore<T> params;  // rnn.{wx,wh,b}, head.{w,b}

  static QNet make(int in_dim, int hidden, int n_actions, SplitRng& rng) {
    if (in_dim < 1 || hidden < 1 || n_actions < 1)
      throw std::invalid_argument("QNet: extents must be positive");
    QNet net;
    net.in_dim = in_dim;
    net.hidden = hidden;
    net.n_actions = n_actions;
    add_gru(net.params, "rnn", in_dim, hidden, rng);
    add_linear(net.params, "head", hidden, n_actions, rng);
    return net;
  }

  Tensor<T> initial_hidden(int batch = 1) const { return Tensor<T>::zeros({batch, hidden}); }
};

template <class T>
struct QNetNodes {
  GruNodes<T> rnn;
  LinearNodes<T> head;
};

template <class T>
QNetNodes<T> qnet_nodes(Graph<T>& g, const QNet<T>& net) {
  return {gru_nodes(g, net.params, "rnn"), linear_nodes(g, net.params, "head")};
}

template <class T>
QNetNodes<T> qnet_nodes_const(Graph<T>& g, const QNet<T>& net) {
  return {gru_nodes_const(g, net.params, "rnn"), linear_nodes_const(g, net.params, "head")};
}

/// One recurrent step on the graph: returns (q-values, next hidden).
template <class T>
std::pair<NodeRef<T>, NodeRef<T>> q_forward_nodes(Graph<T>& g, const QNetNodes<T>& n, NodeRef<T> x,
                                                  NodeRef<T> h) {
  NodeRef<T> h2 = gru_cell(g, n.rnn, x, h);
  return {linear(g, n.head, h2), h2};
}

/// Value-level forward used when acting: no gradients, plain tensors in/out.
template <class T>
std::pair<Tensor<T>, Tensor<T>> q_forward(const QNet<T>& net, const Tensor<T>& input,
                                          const Tensor<T>& h) {
  Graph<T> g;
  QNetNodes<T> n = qnet_nodes_const(g, net);
  auto [q, h2] = q_forward_nodes(g, n, g.constant(input), g.constant(h));
  return {g.value(q), g.value(h2)};
}

/// Epsilon-greedy over one row of q-values; greedy ties resolve to the
/// lowest action index.
template <class T>
int select_action(const Tensor<T>& q, double epsilon, SplitRng& rng) {
  if (q.numel() < 1) throw std::invalid_argument("select_action: empty q-values");
  if (rng.bernoulli(epsilon)) return rng.uniform_int(static_cast<int>(q.numel()));
  int best = 0;
  for (std::size_t i = 1; i < q.data.size(); ++i)
    if (q.data[i] > q.data[best]) best = static_cast<int>(i);
  return best;
}

/// One complete episode as stored for training. Inputs hold len+1 rows per
/// agent (the row at index len is the terminal-observation input used only
/// for bootstrap targets); state mirrors that layout with the concatenated
/// true joint observation. Rewards are kept raw; standardisation happens at
/// training time from the current RewardStats.
template <class T>
struct Episode {
  std::vector<Tensor<T>> inputs;          // per agent: [len+1 x in_dim_i]
  Tensor<T> state;                        // [len+1 x state_dim]
  std::vector<std::vector<int>> actions;  // per agent: [len]
  std::vector<double> rewards;            // [len]
  std::vector<unsigned char> done;        // [len], 1 at the final step
  std::vector<CommMask> masks;            // [len+1] masks drawn at collection (optional)

  int length() const { return static_cast<int>(rewards.size()); }
  int n_agents() const { return static_cast<int>(inputs.size()); }

  void validate() const {
    int len = length();
    if (len < 1) throw std::invalid_argument("Episode: empty");
    if (inputs.empty() || inputs.size() != actions.size())
      throw std::invalid_argument("Episode: agent arity mismatch");
    for (const auto& x : inputs)
      if (x.rows() != len + 1) throw std::invalid_argument("Episode: inputs must have len+1 rows");
    for (const auto& a : actions)
      if (static_cast<int>(a.size()) != len)
        throw std::invalid_argument("Episode: actions/rewards length mismatch");
    if (state.rows() != len + 1) throw std::invalid_argument("Episode: state must have len+1 rows");
    if (static_cast<int>(done.size()) != len)
      throw std::invalid_argument("Episode: done/rewards length mismatch");
    if (!masks.empty() && static_cast<int>(masks.size()) != len + 1)
      throw std::invalid_argument("Episode: masks must cover len+1 observation instants");
  }
};

/// FIFO ring of whole episodes; sampling is uniform with replacement.
template <class T>
class EpisodeReplay {
 public:
  explicit EpisodeReplay(int capacity = kReplayEpisodesDefault) : capacity_(capacity) {
    if (capacity < 1) throw std::invalid_argument("EpisodeReplay: capacity must be positive");
  }

  void push(Episode<T> ep) {
    ep.validate();
    episodes_.push_back(std::move(ep));
    while (static_cast<int>(episodes_.size()) > capacity_) episodes_.pop_front();
  }

  int size() const { return static_cast<int>(episodes_.size()); }
  int capacity() const { return capacity_; }
  const Episode<T>& at(int i) const { return episodes_.at(i); }

  std::vector<const Episode<T>*> sample(int batch, SplitRng& rng) const {
    if (size() < 1) throw std::logic_error("EpisodeReplay: sample from empty buffer");
    std::vector<const Episode<T>*> out;
    out.reserve(batch);
    for (int i = 0; i < batch; ++i) out.push_back(&episodes_[rng.uniform_int(size())]);
    return out;
  }

 private:
  int capacity_;
  std::deque<Episode<T>> episodes_;
};

namespace rl_detail {

template <class T>
int max_length(const std::vector<const Episode<T>*>& batch) {
  int m = 0;
  for (const Episode<T>* e : batch) m = std::max(m, e->length());
  return m;
}

/// Padded per-step input for one agent: rows past an episode's length are 0.
template <class T>
Tensor<T> step_input(const std::vector<const Episode<T>*>& batch, int agent, int t) {
  int B = static_cast<int>(batch.size());
  int d = batch[0]->inputs[agent].cols();
  Tensor<T> out = Tensor<T>::zeros({B, d});
  for (int b = 0; b < B; ++b) {
    const Episode<T>& e = *batch[b];
    if (t <= e.length())
      for (int j = 0; j < d; ++j) out.at(b, j) = e.inputs[agent].at(t, j);
  }
  return out;
}

template <class T>
Tensor<T> step_state(const std::vector<const Episode<T>*>& batch, int t) {
  int B = static_cast<int>(batch.size());
  int d = batch[0]->state.cols();
  Tensor<T> out = Tensor<T>::zeros({B, d});
  for (int b = 0; b < B; ++b)
    if (t <= batch[b]->length())
      for (int j = 0; j < d; ++j) out.at(b, j) = batch[b]->state.at(t, j);
  return out;
}

template <class T>
std::vector<int> step_actions(const std::vector<const Episode<T>*>& batch, int agent, int t) {
  std::vector<int> a(batch.size(), 0);
  for (std::size_t b = 0; b < batch.size(); ++b)
    if (t < batch[b]->length()) a[b] = batch[b]->actions[agent][t];
  return a;
}

/// Per-row (max, argmax) with ties to the lowest index.
template <class T>
void row_max(const Tensor<T>& q, std::vector<T>& mx, std::vector<int>& arg) {
  mx.assign(q.rows(), T(0));
  arg.assign(q.rows(), 0);
  for (int r = 0; r < q.rows(); ++r) {
    int best = 0;
    for (int c = 1; c < q.cols(); ++c)
      if (q.at(r, c) > q.at(r, best)) best = c;
    mx[r] = q.at(r, best);
    arg[r] = best;
  }
}

template <class T>
double effective_reward(const Episode<T>& e, int t, const RlConfig& cfg, const RewardStats* stats) {
  double r = e.rewards[t];
  if (cfg.reward_standardisation && stats != nullptr) r = stats->standardize(r);
  return r;
}

}  // namespace rl_detail

/// Hard target sync: copies online parameters into the target store.
template <class T>
void target_update(const QNet<T>& net, QNet<T>& target) {
  target.params.copy_values_from(net.params);
}

template <class T>
void target_update(const std::vector<QNet<T>>& nets, std::vector<QNet<T>>& targets) {
  if (nets.size() != targets.size()) throw std::invalid_argument("target_update: arity mismatch");
  for (std::size_t i = 0; i < nets.size(); ++i) target_update(nets[i], targets[i]);
}

inline bool target_update_due(long long train_step, long long interval) {
  return interval > 0 && train_step > 0 && train_step % interval == 0;
}

/// Independent Q-learning on a batch of episodes: per-agent BPTT through the
/// full (padded) unroll with semi-gradient TD targets
///   y_t = r_t + gamma * (1 - done_t) * max_a Q_target(input_{t+1}, a).
/// The loss per agent is the squared error averaged over unpadded steps;
/// padded steps contribute exactly zero. Returns the summed loss.
template <class T>
double iql_train(std::vector<QNet<T>>& nets, const std::vector<QNet<T>>& targets,
                 const std::vector<const Episode<T>*>& batch, const RlConfig& cfg,
                 std::vector<AdamState<T>>& opt, const RewardStats* stats = nullptr) {
  if (nets.empty() || nets.size() != targets.size() || nets.size() != opt.size())
    throw std::invalid_argument("iql_train: nets/targets/opt arity mismatch");
  if (batch.empty()) throw std::invalid_argument("iql_train: empty batch");
  int n = static_cast<int>(nets.size());
  int B = static_cast<int>(batch.size());
  int Tmax = rl_detail::max_length(batch);

  Graph<T> g;
  NodeRef<T> total = g.constant(Tensor<T>::zeros({1, 1}));
  for (int i = 0; i < n; ++i) {
    QNetNodes<T> on = qnet_nodes(g, nets[i]);
    QNetNodes<T> tg = qnet_nodes_const(g, targets[i]);

    // Target-side bootstrap values, computed eagerly at value level.
    std::vector<std::vector<T>> boot(Tmax + 1);  // boot[t] = max_a Q_target at step t
    {
      NodeRef<T> h = g.constant(Tensor<T>::zeros({B, nets[i].hidden}));
      std::vector<T> mx;
      std::vector<int> arg;
      for (int t = 0; t <= Tmax; ++t) {
        auto [q, h2] = q_forward_nodes(g, tg, g.constant(rl_detail::step_input(batch, i, t)), h);
        rl_detail::row_max(g.value(q), mx, arg);
        boot[t] = mx;
        h = h2;
      }
    }

    Tensor<T> y = Tensor<T>::zeros({B, Tmax});
    Tensor<T> mask = Tensor<T>::zeros({B, Tmax});
    for (int b = 0; b < B; ++b) {
      const Episode<T>& e = *batch[b];
      for (int t = 0; t < e.length(); ++t) {
        double r = rl_detail::effective_reward(e, t, cfg, stats);
        double bs = e.done[t] ? 0.0 : cfg.gamma * static_cast<double>(boot[t + 1][b]);
        y.at(b, t) = static_cast<T>(r + bs);
        mask.at(b, t) = T(1);
      }
    }

    NodeRef<T> h = g.constant(Tensor<T>::zeros({B, nets[i].hidden}));
    std::vector<NodeRef<T>> taken;
    taken.reserve(Tmax);
    for (int t = 0; t < Tmax; ++t) {
      auto [q, h2] = q_forward_nodes(g, on, g.constant(rl_detail::step_input(batch, i, t)), h);
      taken.push_back(g.gather_cols(q, rl_detail::step_actions(batch, i, t)));
      h = h2;
    }
    total = g.add(total, g.masked_mse(g.concat_cols(taken), std::move(y), std::move(mask)));
  }

  g.backward(total);
  for (int i = 0; i < n; ++i) {
    GradVec<T> grads = g.grads_for(nets[i].params);
    if (cfg.grad_clip > 0) clip_global_norm(grads, cfg.grad_clip);
    adam_step(nets[i].params, grads, opt[i], cfg.lr);
  }
  return static_cast<double>(g.value(total).data[0]);
}

/// Monotonic mixing network. Per-sample weights come from hypernetworks over
/// the global state (one hidden layer of hyper_hidden units for the weight
/// producers); absolute values keep dQ_tot/dq_i >= 0. The mixing body is
///   hidden = elu(q_row * |W1(s)| + b1(s)),  Q_tot = hidden * |W2(s)| + V(s).
template <class T>
struct Mixer {
  int n_agents = 0;
  int state_dim = 0;
  int embed = kMixEmbedDefault;
  int hyper_hidden = kMixHyperHiddenDefault;
  ParamStore<T> params;  // hw1a, hw1b, hb1, hw2a, hw2b, hva, hvb (each .w/.b)

  static Mixer make(int n_agents, int state_dim, SplitRng& rng, int embed = kMixEmbedDefault,
                    int hyper_hidden = kMixHyperHiddenDefault) {
    if (n_agents < 1 || state_dim < 1 || embed < 1 || hyper_hidden < 1)
      throw std::invalid_argument("Mixer: extents must be positive");
    Mixer m;
    m.n_agents = n_agents;
    m.state_dim = state_dim;
    m.embed = embed;
    m.hyper_hidden = hyper_hidden;
    add_linear(m.params, "hw1a", state_dim, hyper_hidden, rng);
    add_linear(m.params, "hw1b", hyper_hidden, n_agents * embed, rng);
    add_linear(m.params, "hb1", state_dim, embed, rng);
    add_linear(m.params, "hw2a", state_dim, hyper_hidden, rng);
    add_linear(m.params, "hw2b", hyper_hidden, embed, rng);
    add_linear(m.params, "hva", state_dim, hyper_hidden, rng);
    add_linear(m.params, "hvb", hyper_hidden, 1, rng);
    return m;
  }
};

template <class T>
struct MixerNodes {
  LinearNodes<T> hw1a, hw1b, hb1, hw2a, hw2b, hva, hvb;
  int n_agents = 0;
  int embed = 0;
};

template <class T>
MixerNodes<T> mixer_nodes(Graph<T>& g, const Mixer<T>& m) {
  return {linear_nodes(g, m.params, "hw1a"), linear_nodes(g, m.params, "hw1b"),
          linear_nodes(g, m.params, "hb1"),  linear_nodes(g, m.params, "hw2a"),
          linear_nodes(g, m.params, "hw2b"), linear_nodes(g, m.params, "hva"),
          linear_nodes(g, m.params, "hvb"),  m.n_agents,
          m.embed};
}

template <class T>
MixerNodes<T> mixer_nodes_const(Graph<T>& g, const Mixer<T>& m) {
  return {linear_nodes_const(g, m.params, "hw1a"), linear_nodes_const(g, m.params, "hw1b"),
          linear_nodes_const(g, m.params, "hb1"),  linear_nodes_const(g, m.params, "hw2a"),
          linear_nodes_const(g, m.params, "hw2b"), linear_nodes_const(g, m.params, "hva"),
          linear_nodes_const(g, m.params, "hvb"),  m.n_agents,
          m.embed};
}

/// q_row is [B x n_agents] of chosen per-agent values, state is [B x state_dim].
template <class T>
NodeRef<T> mixer_forward_nodes(Graph<T>& g, const MixerNodes<T>& m, NodeRef<T> q_row,
                               NodeRef<T> state) {
  NodeRef<T> w1 = g.abs_op(linear(g, m.hw1b, g.relu(linear(g, m.hw1a, state))));
  NodeRef<T> b1 = linear(g, m.hb1, state);
  NodeRef<T> hid = g.elu(g.add(g.bmm_vec(q_row, w1, m.n_agents, m.embed), b1));
  NodeRef<T> w2 = g.abs_op(linear(g, m.hw2b, g.relu(linear(g, m.hw2a, state))));
  NodeRef<T> v = linear(g, m.hvb, g.relu(linear(g, m.hva, state)));
  return g.add(g.bmm_vec(hid, w2, m.embed, 1), v);
}

/// Value-level mixing for probes and greedy evaluation.
template <class T>
Tensor<T> mixer_forward(const Mixer<T>& m, const Tensor<T>& q_row, const Tensor<T>& state) {
  Graph<T> g;
  MixerNodes<T> n = mixer_nodes_const(g, m);
  return g.value(mixer_forward_nodes(g, n, g.constant(q_row), g.constant(state)));
}

template <class T>
void target_update(const Mixer<T>& mixer, Mixer<T>& target) {
  target.params.copy_values_from(mixer.params);
}

/// QMIX: per-agent recurrent nets feed chosen q-values into the monotonic
/// mixer conditioned on the global state. Targets mix the target nets'
/// argmax-per-agent values through the target mixer:
///   y_t = r_t + gamma * (1 - done_t) * Q_tot^target(q*_{t+1}; s_{t+1}).
/// One Adam step over every net plus the mixer; returns the batch loss.
template <class T>
double qmix_train(std::vector<QNet<T>>& nets, const std::vector<QNet<T>>& targets, Mixer<T>& mixer,
                  const Mixer<T>& mixer_target, const std::vector<const Episode<T>*>& batch,
                  const RlConfig& cfg, std::vector<AdamState<T>>& opt, AdamState<T>& mixer_opt,
                  const RewardStats* stats = nullptr) {
  if (nets.empty() || nets.size() != targets.size() || nets.size() != opt.size())
    throw std::invalid_argument("qmix_train: nets/targets/opt arity mismatch");
  if (batch.empty()) throw std::invalid_argument("qmix_train: empty batch");
  int n = static_cast<int>(nets.size());
  if (mixer.n_agents != n || mixer_target.n_agents != n)
    throw std::invalid_argument("qmix_train: mixer arity mismatch");
  int B = static_cast<int>(batch.size());
  int Tmax = rl_detail::max_length(batch);

  Graph<T> g;

  // Target side, all value-level: per-agent argmax values then target mixing.
  std::vector<Tensor<T>> qstar(Tmax + 1, Tensor<T>::zeros({B, n}));
  for (int i = 0; i < n; ++i) {
    QNetNodes<T> tg = qnet_nodes_const(g, targets[i]);
    NodeRef<T> h = g.constant(Tensor<T>::zeros({B, targets[i].hidden}));
    std::vector<T> mx;
    std::vector<int> arg;
    for (int t = 0; t <= Tmax; ++t) {
      auto [q, h2] = q_forward_nodes(g, tg, g.constant(rl_detail::step_input(batch, i, t)), h);
      rl_detail::row_max(g.value(q), mx, arg);
      for (int b = 0; b < B; ++b) qstar[t].at(b, i) = mx[b];
      h = h2;
    }
  }
  MixerNodes<T> tgm = mixer_nodes_const(g, mixer_target);
  Tensor<T> y = Tensor<T>::zeros({B, Tmax});
  Tensor<T> mask = Tensor<T>::zeros({B, Tmax});
  for (int t = 1; t <= Tmax; ++t) {
    Tensor<T> qtot = g.value(mixer_forward_nodes(g, tgm, g.constant(qstar[t]),
                                                 g.constant(rl_detail::step_state(batch, t))));
    for (int b = 0; b < B; ++b) {
      const Episode<T>& e = *batch[b];
      int tt = t - 1;
      if (tt >= e.length()) continue;
      double r = rl_detail::effective_reward(e, tt, cfg, stats);
      double bs = e.done[tt] ? 0.0 : cfg.gamma * static_cast<double>(qtot.at(b, 0));
      y.at(b, tt) = static_cast<T>(r + bs);
      mask.at(b, tt) = T(1);
    }
  }

  // Online side: chosen q per agent per step, mixed over the true state.
  std::vector<QNetNodes<T>> on;
  on.reserve(n);
  for (int i = 0; i < n; ++i) on.push_back(qnet_nodes(g, nets[i]));
  std::vector<NodeRef<T>> h;
  for (int i = 0; i < n; ++i) h.push_back(g.constant(Tensor<T>::zeros({B, nets[i].hidden})));
  MixerNodes<T> onm = mixer_nodes(g, mixer);
  std::vector<NodeRef<T>> qtot_steps;
  qtot_steps.reserve(Tmax);
  for (int t = 0; t < Tmax; ++t) {
    std::vector<NodeRef<T>> qrow_parts;
    qrow_parts.reserve(n);
    for (int i = 0; i < n; ++i) {
      auto [q, h2] = q_forward_nodes(g, on[i], g.constant(rl_detail::step_input(batch, i, t)), h[i]);
      qrow_parts.push_back(g.gather_cols(q, rl_detail::step_actions(batch, i, t)));
      h[i] = h2;
    }
    qtot_steps.push_back(mixer_forward_nodes(g, onm, g.concat_cols(qrow_parts),
                                             g.constant(rl_detail::step_state(batch, t))));
  }
  NodeRef<T> loss = g.masked_mse(g.concat_cols(qtot_steps), std::move(y), std::move(mask));

  g.backward(loss);
  for (int i = 0; i < n; ++i) {
    GradVec<T> grads = g.grads_for(nets[i].params);
    if (cfg.grad_clip > 0) clip_global_norm(grads, cfg.grad_clip);
    adam_step(nets[i].params, grads, opt[i], cfg.lr);
  }
  GradVec<T> mgrads = g.grads_for(mixer.params);
  if (cfg.grad_clip > 0) clip_global_norm(mgrads, cfg.grad_clip);
  adam_step(mixer.params, mgrads, mixer_opt, cfg.lr);
  return static_cast<double>(g.value(loss).data[0]);
}

}  // namespace hymarl
