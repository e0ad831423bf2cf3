#pragma once

/// Input-construction strategies: what each agent's controller sees at
/// training and at execution time. The ladder runs from fully decentralized
/// (own observation only) through zero-imputation baselines to model-based
/// imputation of missing teammate observations.

#include <stdexcept>
#include <string>
#include <vector>

#include "comms.hpp"
#include "envs.hpp"
#include "rng.hpp"
#include "worldmodel.hpp"

namespace hymarl {

enum class StrategyId { obs, oracle, masked_joint, md, md_masks, maro, maro_drop };

inline StrategyId parse_strategy(const std::string& s) {
  if (s == "obs") return StrategyId::obs;
  if (s == "oracle") return StrategyId::oracle;
  if (s == "masked_joint") return StrategyId::masked_joint;
  if (s == "md") return StrategyId::md;
  if (s == "md_masks") return StrategyId::md_masks;
  if (s == "maro") return StrategyId::maro;
  if (s == "maro_drop") return StrategyId::maro_drop;
  throw std::invalid_argument("unknown strategy: " + s);
}

inline std::string strategy_str(StrategyId s) {
  switch (s) {
    case StrategyId::obs: return "obs";
    case StrategyId::oracle: return "oracle";
    case StrategyId::masked_joint: return "masked_joint";
    case StrategyId::md: return "md";
    case StrategyId::md_masks: return "md_masks";
    case StrategyId::maro: return "maro";
    case StrategyId::maro_drop: return "maro_drop";
  }
  throw std::invalid_argument("unknown strategy id");
}

/// Only the model-based strategies train (and checkpoint) a predictive model.
inline bool strategy_trains_model(StrategyId s) {
  return s == StrategyId::maro || s == StrategyId::maro_drop;
}

inline bool strategy_uses_model_at_exec(StrategyId s) { return strategy_trains_model(s); }

/// Controller input width for one agent under a strategy.
inline int input_dim(StrategyId s, const ScenarioSpec& spec, int agent) {
  if (agent < 0 || agent >= spec.n_agents) throw std::out_of_range("input_dim: bad agent");
  int joint = 0;
  for (int d : spec.obs_dims) joint += d;
  switch (s) {
    case StrategyId::obs: return spec.obs_dims[agent];
    case StrategyId::md_masks: return joint + spec.n_agents;
    default: return joint;
  }
}

namespace strat_detail {

inline std::vector<double> concat_full(const std::vector<std::vector<double>>& joint) {
  std::vector<double> out;
  for (const auto& o : joint) out.insert(out.end(), o.begin(), o.end());
  return out;
}

inline void check_joint(const std::vector<std::vector<double>>& joint, const ScenarioSpec& spec) {
  if (static_cast<int>(joint.size()) != spec.n_agents)
    throw std::invalid_argument("strategy input: joint obs arity mismatch");
  for (int j = 0; j < spec.n_agents; ++j)
    if (static_cast<int>(joint[j].size()) != spec.obs_dims[j])
      throw std::invalid_argument("strategy input: observation dim mismatch");
}

}  // namespace strat_detail

/// Per-episode training-input state. MD-style strategies draw one p ~ U(0,1)
/// at episode start and then per-step Bernoulli masks from the episode
/// stream; drop decisions never look at observation values. maro_drop keeps
/// one training-time model instance per agent and feeds it exactly like the
/// execution path would.
template <class T>
class TrainInputBuilder {
 public:
  TrainInputBuilder(StrategyId strategy, const ScenarioSpec& spec, SplitRng episode_rng,
                    const PredictiveModel<T>* model = nullptr)
      : strategy_(strategy), spec_(spec), rng_(episode_rng), mask_(CommMask::all_true(spec.n_agents)) {
    bool drops = strategy == StrategyId::md || strategy == StrategyId::md_masks ||
                 strategy == StrategyId::maro_drop;
    p_ = drops ? rng_.uniform01() : 1.0;
    if (strategy == StrategyId::maro_drop) {
      if (model == nullptr)
        throw std::invalid_argument("maro_drop training requires a predictive model");
      for (int i = 0; i < spec.n_agents; ++i) {
        instances_.emplace_back(model, i);
        instances_.back().reset();
      }
    }
  }

  /// Builds every agent's controller input for the current step from the
  /// true joint observation, then advances the step counter.
  std::vector<std::vector<double>> step(const std::vector<std::vector<double>>& joint_obs) {
    strat_detail::check_joint(joint_obs, spec_);
    int n = spec_.n_agents;
    mask_ = next_mask();
    std::vector<std::vector<double>> out(n);
    switch (strategy_) {
      case StrategyId::obs:
        for (int i = 0; i < n; ++i) out[i] = joint_obs[i];
        break;
      case StrategyId::oracle:
      case StrategyId::masked_joint:
      case StrategyId::maro: {
        std::vector<double> full = strat_detail::concat_full(joint_obs);
        for (int i = 0; i < n; ++i) out[i] = full;
        break;
      }
      case StrategyId::md:
      case StrategyId::md_masks:
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < n; ++j) {
            if (mask_.at(i, j)) {
              out[i].insert(out[i].end(), joint_obs[j].begin(), joint_obs[j].end());
            } else {
              out[i].insert(out[i].end(), joint_obs[j].size(), 0.0);
            }
          }
          if (strategy_ == StrategyId::md_masks)
            for (int j = 0; j < n; ++j) out[i].push_back(mask_.at(i, j) ? 1.0 : 0.0);
        }
        break;
      case StrategyId::maro_drop:
        for (int i = 0; i < n; ++i)
          out[i] = strat_detail::concat_full(instances_[i].step(shared_view(joint_obs, mask_, i)));
        break;
    }
    ++t_;
    return out;
  }

  double episode_p() const { return p_; }
  const CommMask& last_mask() const { return mask_; }
  int steps_taken() const { return t_; }

 private:
  CommMask next_mask() {
    bool drops = strategy_ == StrategyId::md || strategy_ == StrategyId::md_masks ||
                 strategy_ == StrategyId::maro_drop;
    if (!drops) return CommMask::all_true(spec_.n_agents);
    CommMatrix c{spec_.n_agents,
                 std::vector<double>(static_cast<std::size_t>(spec_.n_agents) * spec_.n_agents, p_)};
    for (int i = 0; i < spec_.n_agents; ++i) c.at(i, i) = 1.0;
    return draw_mask(c, t_, rng_);
  }

  StrategyId strategy_;
  ScenarioSpec spec_;
  SplitRng rng_;
  CommMask mask_;
  double p_ = 1.0;
  int t_ = 0;
  std::vector<AgentModelInstance<T>> instances_;
};

/// Execution-time controller input for one agent from its masked view.
/// Zero-imputation strategies fill absent slots with zeros; model-based ones
/// defer to the agent's model instance (which also advances its state).
template <class T = double>
std::vector<double> build_exec_input(StrategyId strategy, int agent, const SharedView& view,
                                     const ScenarioSpec& spec,
                                     AgentModelInstance<T>* instance = nullptr) {
  int n = spec.n_agents;
  if (agent < 0 || agent >= n) throw std::out_of_range("build_exec_input: bad agent");
  if (static_cast<int>(view.present.size()) != n)
    throw std::invalid_argument("build_exec_input: view arity mismatch");
  if (!view.present[agent] || static_cast<int>(view.obs[agent].size()) != spec.obs_dims[agent])
    throw std::invalid_argument("build_exec_input: own observation missing or malformed");

  std::vector<double> out;
  switch (strategy) {
    case StrategyId::obs:
      return view.obs[agent];
    case StrategyId::oracle:
      for (int j = 0; j < n; ++j)
        if (!view.present[j])
          throw std::runtime_error("protocol violation: oracle strategy requires full communication");
      for (int j = 0; j < n; ++j) out.insert(out.end(), view.obs[j].begin(), view.obs[j].end());
      return out;
    case StrategyId::masked_joint:
    case StrategyId::md:
    case StrategyId::md_masks:
      for (int j = 0; j < n; ++j) {
        if (view.present[j]) {
          out.insert(out.end(), view.obs[j].begin(), view.obs[j].end());
        } else {
          out.insert(out.end(), spec.obs_dims[j], 0.0);
        }
      }
      if (strategy == StrategyId::md_masks)
        for (int j = 0; j < n; ++j) out.push_back(view.present[j] ? 1.0 : 0.0);
      return out;
    case StrategyId::maro:
    case StrategyId::maro_drop: {
      if (instance == nullptr)
        throw std::invalid_argument("build_exec_input: model instance required for this strategy");
      return strat_detail::concat_full(instance->step(view));
    }
  }
  throw std::invalid_argument("build_exec_input: unknown strategy");
}

}  // namespace hymarl
