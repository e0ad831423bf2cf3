#pragma once

/// Flat key=value configuration with [section] headers. Parsing keeps the
/// raw text so a run directory can store the config verbatim; resolution
/// fills scenario- and algorithm-dependent defaults and validates every key
/// against the known set before a run starts.

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

#include "comms.hpp"
#include "controllers.hpp"
#include "strategies.hpp"
#include "worldmodel.hpp"

namespace hymarl {

struct ConfigMap {
  std::map<std::string, std::string> kv;  // "section.key" -> value
  std::string raw;

  static ConfigMap parse_string(const std::string& text) {
    ConfigMap m;
    m.raw = text;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    auto trim = [](std::string s) {
      std::size_t a = s.find_first_not_of(" \t\r");
      std::size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    while (std::getline(in, line)) {
      ++lineno;
      std::size_t hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']')
          throw std::invalid_argument("config line " + std::to_string(lineno) + ": bad section");
        section = trim(line.substr(1, line.size() - 2));
        if (section.empty())
          throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty section");
        continue;
      }
      std::size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key=value");
      std::string key = trim(line.substr(0, eq));
      std::string val = trim(line.substr(eq + 1));
      if (key.empty()) throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
      std::string full = section.empty() ? key : section + "." + key;
      if (!m.kv.emplace(full, val).second)
        throw std::invalid_argument("config: duplicate key " + full);
    }
    return m;
  }

  static ConfigMap parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str());
  }

  bool has(const std::string& key) const { return kv.count(key) > 0; }

  std::string get_str(const std::string& key, const std::string& def) const {
    auto it = kv.find(key);
    return it == kv.end() ? def : it->second;
  }

  double get_num(const std::string& key, double def) const {
    auto it = kv.find(key);
    if (it == kv.end()) return def;
    std::size_t used = 0;
    double v = std::stod(it->second, &used);
    if (used != it->second.size())
      throw std::invalid_argument("config: " + key + " is not a number: " + it->second);
    return v;
  }

  long long get_int(const std::string& key, long long def) const {
    auto it = kv.find(key);
    if (it == kv.end()) return def;
    std::size_t used = 0;
    long long v = std::stoll(it->second, &used);
    if (used != it->second.size())
      throw std::invalid_argument("config: " + key + " is not an integer: " + it->second);
    return v;
  }

  bool get_bool(const std::string& key, bool def) const {
    auto it = kv.find(key);
    if (it == kv.end()) return def;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw std::invalid_argument("config: " + key + " is not a bool: " + it->second);
  }
};

/// Fully resolved experiment settings. Learning rate and epsilon anneal
/// default per scenario family and algorithm; everything else defaults to
/// the standard values unless overridden.
struct ExperimentConfig {
  // run
  std::string scenario = "sl";
  std::string algo = "iql";
  StrategyId strategy = StrategyId::maro;
  std::string out_dir = "runs/out";
  CommScheme eval_comm = CommScheme::parse("default");
  long long total_steps = 200000;
  std::uint64_t seed = 0;
  long long eval_every = 10000;
  int eval_rollouts = 20;
  int final_rollouts = 100;
  // controllers
  double lr = 5e-4;
  double gamma = kGammaDefault;
  double eps_start = kEpsStart;
  double eps_end = kEpsEnd;
  long long eps_anneal = 500000;
  long long target_update = kTargetIntervalDefault;
  int hidden = kCtrlHiddenDefault;
  int replay = kReplayEpisodesDefault;
  int batch = kRlBatchDefault;
  double grad_clip = 0.0;
  bool reward_standardisation = true;
  // worldmodel
  int model_hidden = kModelHiddenDefault;
  int model_buffer = kModelBufferEpisodes;
  int model_batch = kModelBatch;
  double model_lr = kModelLr;
  double model_grad_clip = kModelGradClip;
  // mixer
  int mix_embed = kMixEmbedDefault;
  int mix_hyper = kMixHyperHiddenDefault;

  std::string raw;

  /// Canonical full serialization of the resolved settings; used as the
  /// stored config when the run was not started from a file.
  std::string to_text() const {
    std::ostringstream o;
    o << "[run]\n";
    o << "scenario = " << scenario << "\n";
    o << "algo = " << algo << "\n";
    o << "strategy = " << strategy_str(strategy) << "\n";
    o << "out_dir = " << out_dir << "\n";
    o << "eval_comm = " << eval_comm.str() << "\n";
    o << "total_steps = " << total_steps << "\n";
    o << "seed = " << seed << "\n";
    o << "eval_every = " << eval_every << "\n";
    o << "eval_rollouts = " << eval_rollouts << "\n";
    o << "final_rollouts = " << final_rollouts << "\n";
    o << "[controllers]\n";
    o << "learning_rate = " << lr << "\n";
    o << "gamma = " << gamma << "\n";
    o << "epsilon_start = " << eps_start << "\n";
    o << "epsilon_end = " << eps_end << "\n";
    o << "epsilon_anneal = " << eps_anneal << "\n";
    o << "target_update = " << target_update << "\n";
    o << "hidden_dim = " << hidden << "\n";
    o << "replay_episodes = " << replay << "\n";
    o << "batch = " << batch << "\n";
    o << "grad_clip = " << grad_clip << "\n";
    o << "reward_standardisation = " << (reward_standardisation ? "true" : "false") << "\n";
    o << "[worldmodel]\n";
    o << "hidden = " << model_hidden << "\n";
    o << "buffer_episodes = " << model_buffer << "\n";
    o << "batch = " << model_batch << "\n";
    o << "learning_rate = " << model_lr << "\n";
    o << "grad_clip = " << model_grad_clip << "\n";
    o << "[mixer]\n";
    o << "embed = " << mix_embed << "\n";
    o << "hypernet_hidden = " << mix_hyper << "\n";
    return o.str();
  }

  RlConfig rl() const {
    RlConfig c;
    c.lr = lr;
    c.gamma = gamma;
    c.target_interval = target_update;
    c.grad_clip = grad_clip;
    c.reward_standardisation = reward_standardisation;
    return c;
  }

  EpsilonSchedule epsilon() const { return {eps_start, eps_end, eps_anneal}; }

  static void check_known_keys(const ConfigMap& m) {
    static const std::set<std::string> known = {
        "run.scenario",      "run.algo",
        "run.strategy",      "run.out_dir",
        "run.eval_comm",     "run.total_steps",
        "run.seed",          "run.eval_every",
        "run.eval_rollouts", "run.final_rollouts",
        "controllers.learning_rate",
        "controllers.gamma",
        "controllers.epsilon_start",
        "controllers.epsilon_end",
        "controllers.epsilon_anneal",
        "controllers.target_update",
        "controllers.hidden_dim",
        "controllers.replay_episodes",
        "controllers.batch",
        "controllers.grad_clip",
        "controllers.reward_standardisation",
        "worldmodel.hidden",
        "worldmodel.buffer_episodes",
        "worldmodel.batch",
        "worldmodel.learning_rate",
        "worldmodel.grad_clip",
        "mixer.embed",
        "mixer.hypernet_hidden",
    };
    for (const auto& [k, v] : m.kv)
      if (!known.count(k)) throw std::invalid_argument("config: unknown key " + k);
  }

  static ExperimentConfig resolve(const ConfigMap& m) {
    check_known_keys(m);
    ExperimentConfig c;
    c.raw = m.raw;
    c.scenario = m.get_str("run.scenario", c.scenario);
    static const std::set<std::string> scenarios = {"hs", "sxy2", "sxy4", "sbf", "sl", "toy", "lbf"};
    if (!scenarios.count(c.scenario))
      throw std::invalid_argument("config: unknown scenario " + c.scenario);
    c.algo = m.get_str("run.algo", c.algo);
    if (c.algo != "iql" && c.algo != "qmix")
      throw std::invalid_argument("config: unknown algo " + c.algo);
    c.strategy = parse_strategy(m.get_str("run.strategy", strategy_str(c.strategy)));
    c.out_dir = m.get_str("run.out_dir", c.out_dir);
    c.eval_comm = CommScheme::parse(m.get_str("run.eval_comm", "default"));
    c.total_steps = m.get_int("run.total_steps", c.total_steps);
    if (c.total_steps < 1) throw std::invalid_argument("config: total_steps must be positive");
    c.seed = static_cast<std::uint64_t>(m.get_int("run.seed", 0));
    c.eval_every = m.get_int("run.eval_every", c.eval_every);
    c.eval_rollouts = static_cast<int>(m.get_int("run.eval_rollouts", c.eval_rollouts));
    c.final_rollouts = static_cast<int>(m.get_int("run.final_rollouts", c.final_rollouts));

    // scenario-family and algorithm dependent defaults
    bool lbf = c.scenario == "lbf";
    if (c.algo == "iql") {
      c.lr = lbf ? 3e-4 : 5e-4;
      c.eps_anneal = lbf ? 100000 : 500000;
    } else {
      c.lr = lbf ? 1e-4 : 5e-4;
      c.eps_anneal = lbf ? 100000 : 50000;
    }
    c.lr = m.get_num("controllers.learning_rate", c.lr);
    c.gamma = m.get_num("controllers.gamma", c.gamma);
    c.eps_start = m.get_num("controllers.epsilon_start", c.eps_start);
    c.eps_end = m.get_num("controllers.epsilon_end", c.eps_end);
    c.eps_anneal = m.get_int("controllers.epsilon_anneal", c.eps_anneal);
    c.target_update = m.get_int("controllers.target_update", c.target_update);
    c.hidden = static_cast<int>(m.get_int("controllers.hidden_dim", c.hidden));
    c.replay = static_cast<int>(m.get_int("controllers.replay_episodes", c.replay));
    c.batch = static_cast<int>(m.get_int("controllers.batch", c.batch));
    c.grad_clip = m.get_num("controllers.grad_clip", c.grad_clip);
    c.reward_standardisation = m.get_bool("controllers.reward_standardisation", c.reward_standardisation);

    c.model_hidden = static_cast<int>(m.get_int("worldmodel.hidden", c.model_hidden));
    c.model_buffer = static_cast<int>(m.get_int("worldmodel.buffer_episodes", c.model_buffer));
    c.model_batch = static_cast<int>(m.get_int("worldmodel.batch", c.model_batch));
    c.model_lr = m.get_num("worldmodel.learning_rate", c.model_lr);
    c.model_grad_clip = m.get_num("worldmodel.grad_clip", c.model_grad_clip);

    c.mix_embed = static_cast<int>(m.get_int("mixer.embed", c.mix_embed));
    c.mix_hyper = static_cast<int>(m.get_int("mixer.hypernet_hidden", c.mix_hyper));

    if (c.hidden < 1 || c.model_hidden < 1 || c.batch < 1 || c.replay < 1)
      throw std::invalid_argument("config: extents must be positive");
    return c;
  }
};

}  // namespace hymarl
