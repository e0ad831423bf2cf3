#pragma once

/// Experiment orchestration: the train/collect loop, greedy evaluation under
/// communication schemes, sweeps over communication levels, bootstrapped
/// reports, and run-directory persistence. Every run is fully determined by
/// (config, seed): environment, exploration, communication, initialization,
/// replay, model, evaluation, and bootstrap draws each come from an
/// independent named sub-stream of the master seed.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "checkpoint.hpp"
#include "comms.hpp"
#include "config.hpp"
#include "controllers.hpp"
#include "envs.hpp"
#include "stats.hpp"
#include "strategies.hpp"
#include "svg.hpp"
#include "worldmodel.hpp"

namespace hymarl {

struct EvalReport {
  double mean = 0, lo = 0, hi = 0;
  int n = 0;
  std::string comm;
};

struct CurvePoint {
  long long step = 0;
  double ret = 0, lo = 0, hi = 0;
  double td_loss = 0, model_loss = 0, eps = 0;
};

/// Everything needed to act greedily: resolved config, scenario, per-agent
/// nets, and (for model-based strategies) the shared predictive model.
template <class T>
struct Policy {
  ExperimentConfig cfg;
  ScenarioSpec spec;
  std::vector<QNet<T>> nets;
  std::optional<PredictiveModel<T>> model;
};

inline std::string fmt_g(double v) {
  char b[40];
  std::snprintf(b, sizeof(b), "%.17g", v);
  return b;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace harness_detail {

template <class T>
Tensor<T> to_row(const std::vector<double>& v) {
  Tensor<T> t = Tensor<T>::zeros({1, static_cast<int>(v.size())});
  for (std::size_t i = 0; i < v.size(); ++i) t.data[i] = static_cast<T>(v[i]);
  return t;
}

template <class T>
Tensor<T> rows_to_tensor(const std::vector<std::vector<double>>& rows) {
  int r = static_cast<int>(rows.size());
  int c = r > 0 ? static_cast<int>(rows[0].size()) : 0;
  Tensor<T> t = Tensor<T>::zeros({r, c});
  for (int i = 0; i < r; ++i) {
    if (static_cast<int>(rows[i].size()) != c) throw std::invalid_argument("ragged rows");
    for (int j = 0; j < c; ++j) t.at(i, j) = static_cast<T>(rows[i][j]);
  }
  return t;
}

inline std::vector<double> flat_joint(const std::vector<std::vector<double>>& joint) {
  std::vector<double> f;
  for (const auto& o : joint) f.insert(f.end(), o.begin(), o.end());
  return f;
}

}  // namespace harness_detail

/// Greedy (epsilon = 0) rollouts under a communication scheme. One episode
/// per rollout with fresh matrix/mask draws; model instances reset per
/// episode. Returns the per-rollout episodic returns.
template <class T>
std::vector<double> eval_returns(const Policy<T>& pol, const CommScheme& scheme, int n_rollouts,
                                 SplitRng stream) {
  if (n_rollouts < 1) throw std::invalid_argument("eval: rollouts must be positive");
  auto env = make_env(pol.spec.id, stream.split("env").key());
  int n = pol.spec.n_agents;
  bool needs_model = strategy_uses_model_at_exec(pol.cfg.strategy);
  if (needs_model && !pol.model) throw std::logic_error("eval: strategy requires a model checkpoint");

  std::vector<double> rets;
  rets.reserve(n_rollouts);
  for (int r = 0; r < n_rollouts; ++r) {
    SplitRng ep = stream.split(static_cast<std::uint64_t>(r));
    SplitRng crng = ep.split("comm");
    SplitRng arng = ep.split("act");
    CommMatrix cm = sample_matrix(scheme, n, crng);
    auto obs = env->reset();
    std::vector<Tensor<T>> h;
    for (int i = 0; i < n; ++i) h.push_back(pol.nets[i].initial_hidden());
    std::vector<AgentModelInstance<T>> insts;
    if (needs_model)
      for (int i = 0; i < n; ++i) {
        insts.emplace_back(&*pol.model, i);
        insts.back().reset();
      }
    double ret = 0;
    for (int t = 0;; ++t) {
      cm = maybe_resample(scheme, t, cm, crng);
      CommMask mask = draw_mask(cm, t, crng);
      std::vector<int> actions(n);
      for (int i = 0; i < n; ++i) {
        SharedView view = shared_view(obs, mask, i);
        auto in = build_exec_input(pol.cfg.strategy, i, view, pol.spec,
                                   insts.empty() ? nullptr : &insts[i]);
        auto [q, h2] = q_forward(pol.nets[i], harness_detail::to_row<T>(in), h[i]);
        h[i] = h2;
        actions[i] = select_action(q, 0.0, arng);
      }
      StepResult res = env->step(actions);
      ret += res.reward;
      obs = res.obs;
      if (res.done) break;
    }
    rets.push_back(ret);
  }
  return rets;
}

/// Evaluation entry point. The oracle strategy is always forced to full
/// communication. Rollout draws and bootstrap draws come from separate
/// streams so the CI can be re-randomized without changing the mean.
template <class T>
EvalReport run_eval(const Policy<T>& pol, CommScheme scheme, int n_rollouts, SplitRng rollout_stream,
                    SplitRng boot_stream, std::vector<double>* returns_out = nullptr) {
  if (pol.cfg.strategy == StrategyId::oracle) scheme = CommScheme::fixed_p(1.0);
  std::vector<double> rets = eval_returns(pol, scheme, n_rollouts, rollout_stream);
  auto [lo, hi] = bootstrap_ci(rets, boot_stream);
  if (returns_out) *returns_out = rets;
  return {mean_of(rets), lo, hi, n_rollouts, scheme.str()};
}

template <class T>
void save_run_checkpoint(const std::string& path, const std::vector<QNet<T>>& nets,
                         const Mixer<T>* mixer, const PredictiveModel<T>* model,
                         const RewardStats& stats) {
  std::map<std::string, Tensor<double>> m;
  for (std::size_t i = 0; i < nets.size(); ++i)
    checkpoint_put(m, "agent" + std::to_string(i) + ".", nets[i].params);
  if (mixer != nullptr) checkpoint_put(m, "mixer.", mixer->params);
  if (model != nullptr) checkpoint_put(m, "model.", model->params);
  m.emplace("run.reward_stats",
            Tensor<double>::row({static_cast<double>(stats.count), stats.mean, stats.m2}));
  save_checkpoint(path, m);
}

/// Rebuilds an actable policy from a run directory (config + checkpoint).
template <class T>
Policy<T> load_policy(const std::string& run_dir) {
  ExperimentConfig cfg = ExperimentConfig::resolve(ConfigMap::parse_file(run_dir + "/config.ini"));
  ConfigMap meta = ConfigMap::parse_string(read_text_file(run_dir + "/run_meta.txt"));
  cfg.seed = static_cast<std::uint64_t>(meta.get_int("seed", static_cast<long long>(cfg.seed)));

  Policy<T> pol;
  pol.cfg = cfg;
  pol.spec = make_env(cfg.scenario, 0)->spec();
  SplitRng shape_rng(0);
  for (int i = 0; i < pol.spec.n_agents; ++i)
    pol.nets.push_back(QNet<T>::make(input_dim(cfg.strategy, pol.spec, i), cfg.hidden,
                                     pol.spec.n_actions[i], shape_rng));
  if (strategy_trains_model(cfg.strategy))
    pol.model = PredictiveModel<T>::make(pol.spec.obs_dims, cfg.model_hidden, shape_rng);

  auto m = load_checkpoint(run_dir + "/checkpoints/final.ckpt");
  for (int i = 0; i < pol.spec.n_agents; ++i)
    checkpoint_get(m, "agent" + std::to_string(i) + ".", pol.nets[i].params);
  if (pol.model) checkpoint_get(m, "model.", pol.model->params);
  return pol;
}

struct TrainOutcome {
  std::string run_dir;
  std::vector<CurvePoint> curve;
  EvalReport final_eval;
};

/// One full training run. Loop: collect one episode with the strategy's
/// training inputs and the current epsilon -> store in the replays -> one
/// controller train step (plus one model step for model strategies) ->
/// periodic hard target sync -> periodic evaluation. Writes config.ini
/// (verbatim), metrics CSVs, per-episode JSONL, an SVG curve, and the final
/// checkpoint into <out_dir>/seed<k>.
template <class T = float>
TrainOutcome train_run(const ExperimentConfig& cfg_in) {
  ExperimentConfig cfg = cfg_in;
  std::string run_dir = cfg.out_dir + "/seed" + std::to_string(cfg.seed);
  std::filesystem::create_directories(run_dir + "/checkpoints");

  auto env = make_env(cfg.scenario, SplitRng::from_master(cfg.seed, "env").key());
  const ScenarioSpec spec = env->spec();
  const int n = spec.n_agents;
  int state_dim = 0;
  for (int d : spec.obs_dims) state_dim += d;

  SplitRng init = SplitRng::from_master(cfg.seed, "init");
  SplitRng explore = SplitRng::from_master(cfg.seed, "explore");
  SplitRng replay_rng = SplitRng::from_master(cfg.seed, "replay");
  SplitRng model_rng = SplitRng::from_master(cfg.seed, "model");

  std::vector<QNet<T>> nets, targets;
  std::vector<AdamState<T>> opt;
  for (int i = 0; i < n; ++i) {
    nets.push_back(QNet<T>::make(input_dim(cfg.strategy, spec, i), cfg.hidden, spec.n_actions[i], init));
    targets.push_back(nets.back());  // targets start as exact copies
    opt.push_back(AdamState<T>::for_store(nets[i].params));
  }
  const bool qmix = cfg.algo == "qmix";
  std::optional<Mixer<T>> mixer, mixer_tgt;
  std::optional<AdamState<T>> mixer_opt;
  if (qmix) {
    mixer = Mixer<T>::make(n, state_dim, init, cfg.mix_embed, cfg.mix_hyper);
    mixer_tgt = *mixer;
    mixer_opt = AdamState<T>::for_store(mixer->params);
  }
  std::optional<PredictiveModel<T>> model;
  std::optional<AdamState<T>> model_opt;
  if (strategy_trains_model(cfg.strategy)) {
    model = PredictiveModel<T>::make(spec.obs_dims, cfg.model_hidden, init);
    model_opt = AdamState<T>::for_store(model->params);
  }

  EpisodeReplay<T> replay(cfg.replay);
  ModelBuffer<T> mbuf(cfg.model_buffer);
  RewardStats stats;
  const RlConfig rl = cfg.rl();
  const EpsilonSchedule sched = cfg.epsilon();

  long long env_steps = 0, train_steps = 0, episode_idx = 0;
  long long next_eval = cfg.eval_every;
  std::uint64_t eval_calls = 0;
  double last_td = 0, last_model = 0;
  std::vector<CurvePoint> curve;
  std::string jsonl;

  while (env_steps < cfg.total_steps) {
    SplitRng ep_comm = SplitRng::from_master(cfg.seed, "comm").split(static_cast<std::uint64_t>(episode_idx));
    TrainInputBuilder<T> builder(cfg.strategy, spec, ep_comm, model ? &*model : nullptr);
    auto obs = env->reset();

    std::vector<std::vector<std::vector<double>>> in_rows(n);
    std::vector<std::vector<double>> state_rows;
    std::vector<std::vector<int>> acts(n);
    std::vector<double> rewards;
    std::vector<unsigned char> dones;
    std::vector<CommMask> masks;
    std::vector<std::vector<std::vector<double>>> obs_stream;
    std::vector<Tensor<T>> h;
    for (int i = 0; i < n; ++i) h.push_back(nets[i].initial_hidden());

    double ep_return = 0;
    bool done = false;
    while (!done) {
      auto in_t = builder.step(obs);
      masks.push_back(builder.last_mask());
      obs_stream.push_back(obs);
      state_rows.push_back(harness_detail::flat_joint(obs));
      double eps = sched.at(env_steps);
      std::vector<int> actions(n);
      for (int i = 0; i < n; ++i) {
        auto [q, h2] = q_forward(nets[i], harness_detail::to_row<T>(in_t[i]), h[i]);
        h[i] = h2;
        actions[i] = select_action(q, eps, explore);
        in_rows[i].push_back(in_t[i]);
        acts[i].push_back(actions[i]);
      }
      StepResult res = env->step(actions);
      rewards.push_back(res.reward);
      dones.push_back(res.done ? 1 : 0);
      stats.update(res.reward);
      ep_return += res.reward;
      obs = res.obs;
      ++env_steps;
      done = res.done;
    }
    auto in_T = builder.step(obs);  // terminal-observation input row (bootstrap only)
    masks.push_back(builder.last_mask());
    obs_stream.push_back(obs);
    state_rows.push_back(harness_detail::flat_joint(obs));
    for (int i = 0; i < n; ++i) in_rows[i].push_back(in_T[i]);

    Episode<T> ep;
    for (int i = 0; i < n; ++i) ep.inputs.push_back(harness_detail::rows_to_tensor<T>(in_rows[i]));
    ep.state = harness_detail::rows_to_tensor<T>(state_rows);
    ep.actions = std::move(acts);
    ep.rewards = std::move(rewards);
    ep.done = std::move(dones);
    ep.masks = std::move(masks);
    replay.push(std::move(ep));
    if (model) mbuf.push(make_model_episode<T>(obs_stream));

    jsonl += "{\"episode\": " + std::to_string(episode_idx) + ", \"seed\": " +
             std::to_string(cfg.seed) + ", \"p_drawn\": " + fmt_g(builder.episode_p()) +
             ", \"return\": " + fmt_g(ep_return) + "}\n";

    if (replay.size() >= cfg.batch) {
      auto batch = replay.sample(cfg.batch, replay_rng);
      const RewardStats* sp = cfg.reward_standardisation ? &stats : nullptr;
      last_td = qmix ? qmix_train(nets, targets, *mixer, *mixer_tgt, batch, rl, opt, *mixer_opt, sp)
                     : iql_train(nets, targets, batch, rl, opt, sp);
      ++train_steps;
      if (target_update_due(train_steps, rl.target_interval)) {
        target_update(nets, targets);
        if (qmix) target_update(*mixer, *mixer_tgt);
      }
    }
    if (model) {
      auto ml = train_model_step(*model, mbuf, *model_opt, model_rng, cfg.model_batch, cfg.model_lr,
                                 cfg.model_grad_clip);
      if (ml) last_model = *ml;
    }
    ++episode_idx;

    if (env_steps >= next_eval && env_steps < cfg.total_steps) {
      ++eval_calls;
      Policy<T> pv{cfg, spec, nets, model};
      EvalReport r = run_eval(pv, cfg.eval_comm, cfg.eval_rollouts,
                              SplitRng::from_master(cfg.seed, "eval").split(eval_calls),
                              SplitRng::from_master(cfg.seed, "bootstrap").split(eval_calls));
      curve.push_back({env_steps, r.mean, r.lo, r.hi, last_td, last_model, sched.at(env_steps)});
      next_eval = (env_steps / cfg.eval_every + 1) * cfg.eval_every;
    }
  }

  Policy<T> pol{cfg, spec, nets, model};
  EvalReport fin = run_eval(pol, cfg.eval_comm, cfg.final_rollouts,
                            SplitRng::from_master(cfg.seed, "eval").split("final"),
                            SplitRng::from_master(cfg.seed, "bootstrap").split("final"));
  curve.push_back({env_steps, fin.mean, fin.lo, fin.hi, last_td, last_model, sched.at(env_steps)});

  save_run_checkpoint(run_dir + "/checkpoints/final.ckpt", nets, mixer ? &*mixer : nullptr,
                      model ? &*model : nullptr, stats);
  write_text_file(run_dir + "/config.ini", cfg.raw.empty() ? cfg.to_text() : cfg.raw);
  write_text_file(run_dir + "/run_meta.txt", "seed = " + std::to_string(cfg.seed) + "\n");
  write_text_file(run_dir + "/episodes.jsonl", jsonl);

  std::string csv = "step,return,ci_lo,ci_hi\n";
  std::string mcsv = "step,return,ci_lo,ci_hi,td_loss,model_loss,epsilon\n";
  for (const CurvePoint& p : curve) {
    csv += std::to_string(p.step) + "," + fmt_g(p.ret) + "," + fmt_g(p.lo) + "," + fmt_g(p.hi) + "\n";
    mcsv += std::to_string(p.step) + "," + fmt_g(p.ret) + "," + fmt_g(p.lo) + "," + fmt_g(p.hi) +
            "," + fmt_g(p.td_loss) + "," + fmt_g(p.model_loss) + "," + fmt_g(p.eps) + "\n";
  }
  write_text_file(run_dir + "/training_curve.csv", csv);
  write_text_file(run_dir + "/metrics.csv", mcsv);

  std::string sum = "strategy,algo,scenario,mean,ci_lo,ci_hi,n\n";
  sum += strategy_str(cfg.strategy) + "," + cfg.algo + "," + cfg.scenario + "," + fmt_g(fin.mean) +
         "," + fmt_g(fin.lo) + "," + fmt_g(fin.hi) + "," + std::to_string(fin.n) + "\n";
  write_text_file(run_dir + "/summary.csv", sum);

  Series s;
  s.label = strategy_str(cfg.strategy);
  for (const CurvePoint& p : curve) {
    s.x.push_back(static_cast<double>(p.step));
    s.y.push_back(p.ret);
    s.lo.push_back(p.lo);
    s.hi.push_back(p.hi);
  }
  write_text_file(run_dir + "/training_curve.svg",
                  line_chart_svg("Training curve: " + cfg.scenario + " / " + cfg.algo + " / " +
                                     strategy_str(cfg.strategy),
                                 "environment steps", "episodic return", {s}));

  return {run_dir, std::move(curve), fin};
}

/// Evaluates a trained run over the communication-level grid and writes
/// sweep_p.csv + sweep_p.svg into the run directory. The oracle strategy is
/// only defined at p = 1, so its sweep has a single row.
template <class T = float>
std::vector<std::pair<double, EvalReport>> sweep_p_run(const std::string& run_dir,
                                                       int rollouts = 100) {
  Policy<T> pol = load_policy<T>(run_dir);
  std::vector<double> grid;
  if (pol.cfg.strategy == StrategyId::oracle) {
    grid = {1.0};
  } else {
    for (int k = 0; k <= 10; ++k) grid.push_back(k / 10.0);
  }
  std::vector<std::pair<double, EvalReport>> rows;
  for (double p : grid) {
    auto salt = static_cast<std::uint64_t>(p * 10.0 + 0.5);
    EvalReport r = run_eval(pol, CommScheme::fixed_p(p), rollouts,
                            SplitRng::from_master(pol.cfg.seed, "sweep").split(salt),
                            SplitRng::from_master(pol.cfg.seed, "sweep-boot").split(salt));
    rows.emplace_back(p, r);
  }

  std::string csv = "p,mean,ci_lo,ci_hi\n";
  Series s;
  s.label = strategy_str(pol.cfg.strategy);
  for (const auto& [p, r] : rows) {
    csv += fmt_g(p) + "," + fmt_g(r.mean) + "," + fmt_g(r.lo) + "," + fmt_g(r.hi) + "\n";
    s.x.push_back(p);
    s.y.push_back(r.mean);
    s.lo.push_back(r.lo);
    s.hi.push_back(r.hi);
  }
  write_text_file(run_dir + "/sweep_p.csv", csv);
  write_text_file(run_dir + "/sweep_p.svg",
                  line_chart_svg("Return vs communication level: " + pol.cfg.scenario,
                                 "communication level p", "episodic return", {s}));
  return rows;
}

namespace harness_detail {

inline std::vector<std::vector<double>> parse_csv(const std::string& text, int expect_cols) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("csv: empty file");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    if (static_cast<int>(row.size()) != expect_cols) throw std::runtime_error("csv: bad row: " + line);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace harness_detail

/// Regenerates the SVG charts of a run directory from its CSV artifacts.
inline void plot_run(const std::string& run_dir) {
  namespace fs = std::filesystem;
  if (!fs::exists(run_dir + "/training_curve.csv"))
    throw std::runtime_error("plot: missing metrics: " + run_dir + "/training_curve.csv");
  auto rows = harness_detail::parse_csv(read_text_file(run_dir + "/training_curve.csv"), 4);
  Series s;
  s.label = "return";
  for (const auto& r : rows) {
    s.x.push_back(r[0]);
    s.y.push_back(r[1]);
    s.lo.push_back(r[2]);
    s.hi.push_back(r[3]);
  }
  write_text_file(run_dir + "/training_curve.svg",
                  line_chart_svg("Training curve", "environment steps", "episodic return", {s}));
  if (fs::exists(run_dir + "/sweep_p.csv")) {
    auto srows = harness_detail::parse_csv(read_text_file(run_dir + "/sweep_p.csv"), 4);
    Series sw;
    sw.label = "return";
    for (const auto& r : srows) {
      sw.x.push_back(r[0]);
      sw.y.push_back(r[1]);
      sw.lo.push_back(r[2]);
      sw.hi.push_back(r[3]);
    }
    write_text_file(run_dir + "/sweep_p.svg",
                    line_chart_svg("Return vs communication level", "communication level p",
                                   "episodic return", {sw}));
  }
}

/// Runs one greedy full-communication episode and dumps, per step, the true
/// next joint observation alongside agent 0's k-step autoregressive joint
/// prediction, as JSON lines.
template <class T = float>
std::string predict_dump(const std::string& run_dir, int horizon) {
  if (horizon < 1) throw std::invalid_argument("predict-dump: horizon must be >= 1");
  Policy<T> pol = load_policy<T>(run_dir);
  if (!pol.model) throw std::runtime_error("predict-dump: run has no predictive model");
  const int n = pol.spec.n_agents;

  auto env = make_env(pol.spec.id, SplitRng::from_master(pol.cfg.seed, "eval").split("dump").key());
  SplitRng arng = SplitRng::from_master(pol.cfg.seed, "eval").split("dump-act");
  auto obs = env->reset();
  std::vector<Tensor<T>> h;
  for (int i = 0; i < n; ++i) h.push_back(pol.nets[i].initial_hidden());
  std::vector<AgentModelInstance<T>> insts;
  for (int i = 0; i < n; ++i) {
    insts.emplace_back(&*pol.model, i);
    insts.back().reset();
  }

  auto flat_json = [](const std::vector<double>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt_g(v[i]);
    return s + "]";
  };

  std::string out;
  CommMask full = CommMask::all_true(n);
  for (int t = 0;; ++t) {
    std::vector<int> actions(n);
    for (int i = 0; i < n; ++i) {
      SharedView view = shared_view(obs, full, i);
      auto in = build_exec_input(pol.cfg.strategy, i, view, pol.spec, &insts[i]);
      auto [q, h2] = q_forward(pol.nets[i], harness_detail::to_row<T>(in), h[i]);
      h[i] = h2;
      actions[i] = select_action(q, 0.0, arng);
    }
    auto pred = insts[0].rollout_predict(horizon);
    StepResult res = env->step(actions);
    out += "{\"t\": " + std::to_string(t) + ", \"true_next\": " +
           flat_json(harness_detail::flat_joint(res.obs)) + ", \"predicted\": [";
    for (int k = 0; k < horizon; ++k)
      out += std::string(k ? "," : "") + flat_json(harness_detail::flat_joint(pred[k]));
    out += "]}\n";
    obs = res.obs;
    if (res.done) break;
  }
  return out;
}

}  // namespace hymarl
