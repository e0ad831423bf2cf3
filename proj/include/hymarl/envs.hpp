#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "hymarl/rng.hpp"

namespace hymarl {

struct Vec2 {
  double x = 0, y = 0;
};

inline double dist(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

// Particle-world constants (not restated by the task definitions; these are
// the conventional defaults of this family of environments, documented as
// assumptions in the README).
inline constexpr double kDt = 0.1;              // s
inline constexpr double kDamping = 0.25;        // per-step velocity loss
inline constexpr double kAccelGain = 5.0;       // N, force magnitude per move action
inline constexpr double kCollisionDist = 0.3;   // m, sum of agent radii
inline constexpr double kCollisionPenalty = 1.0;
inline constexpr int kParticleSteps = 25;

struct ParticleWorld {
  std::vector<Vec2> pos, vel;
  std::vector<Vec2> landmarks;
  double dt = kDt;
  double damping = kDamping;
  int max_steps = kParticleSteps;
  int t = 0;
};

/// Unit-mass semi-implicit update: v' = v(1-damping) + F dt; x' = x + v' dt.
inline void physics_step(ParticleWorld& w, const std::vector<Vec2>& forces) {
  for (std::size_t i = 0; i < w.pos.size(); ++i) {
    Vec2 f = i < forces.size() ? forces[i] : Vec2{};
    if (!std::isfinite(f.x) || !std::isfinite(f.y))
      throw std::invalid_argument("physics_step: non-finite force");
    w.vel[i].x = w.vel[i].x * (1.0 - w.damping) + f.x * w.dt;
    w.vel[i].y = w.vel[i].y * (1.0 - w.damping) + f.y * w.dt;
    w.pos[i].x += w.vel[i].x * w.dt;
    w.pos[i].y += w.vel[i].y * w.dt;
  }
}

inline int count_colliding_pairs(const std::vector<Vec2>& pos) {
  int pairs = 0;
  for (std::size_t i = 0; i < pos.size(); ++i)
    for (std::size_t j = i + 1; j < pos.size(); ++j)
      if (dist(pos[i], pos[j]) < kCollisionDist) ++pairs;
  return pairs;
}

/// Cover reward: -sum over landmarks of the closest agent's distance, minus
/// the collision penalty booked once per agent in each colliding pair (2x
/// per pair), matching the reference environment's accounting.
inline double spread_reward(const std::vector<Vec2>& agents, const std::vector<Vec2>& landmarks,
                            int colliding_pairs) {
  if (landmarks.empty()) throw std::invalid_argument("spread_reward: no landmarks");
  double r = 0;
  for (const Vec2& lm : landmarks) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec2& a : agents) best = std::min(best, dist(a, lm));
    r -= best;
  }
  return r - 2.0 * kCollisionPenalty * colliding_pairs;
}

struct ScenarioSpec {
  std::string id;
  int n_agents = 0;
  std::vector<int> obs_dims;    // per agent
  std::vector<int> n_actions;   // per agent
  int max_steps = 0;
};

struct StepResult {
  std::vector<std::vector<double>> obs;
  double reward = 0;
  bool done = false;
};

class Env {
 public:
  virtual ~Env() = default;
  virtual const ScenarioSpec& spec() const = 0;
  virtual std::vector<std::vector<double>> reset() = 0;
  virtual StepResult step(const std::vector<int>& actions) = 0;
  virtual std::vector<double> observe(int agent) const = 0;
};

namespace envdetail {

inline Vec2 force_from_move(int action, double gain) {
  switch (action) {
    case 0: return {0, 0};
    case 1: return {gain, 0};
    case 2: return {-gain, 0};
    case 3: return {0, gain};
    case 4: return {0, -gain};
    default: throw std::out_of_range("move action out of range: " + std::to_string(action));
  }
}

inline Vec2 spawn(SplitRng& rng) {
  double x = rng.uniform(-1.0, 1.0);
  double y = rng.uniform(-1.0, 1.0);
  return {x, y};
}

}  // namespace envdetail

/// Shared plumbing for the continuous scenarios: uniform spawns in [-1,1]^2,
/// zero reset velocities, move-action forces, fixed-length episodes.
class ParticleEnvBase : public Env {
 public:
  ParticleEnvBase(ScenarioSpec spec, int n_landmarks, std::uint64_t seed)
      : spec_(std::move(spec)), n_landmarks_(n_landmarks), rng_(seed) {
    world_.pos.resize(spec_.n_agents);
    world_.vel.resize(spec_.n_agents);
    world_.landmarks.resize(n_landmarks_);
    world_.max_steps = spec_.max_steps;
  }

  const ScenarioSpec& spec() const override { return spec_; }

  std::vector<std::vector<double>> reset() override {
    for (auto& p : world_.pos) p = envdetail::spawn(rng_);
    for (auto& v : world_.vel) v = {0, 0};
    for (auto& lm : world_.landmarks) lm = envdetail::spawn(rng_);
    world_.t = 0;
    on_reset();
    return joint_obs();
  }

  StepResult step(const std::vector<int>& actions) override {
    if (static_cast<int>(actions.size()) != spec_.n_agents)
      throw std::invalid_argument("step: wrong number of actions");
    for (int i = 0; i < spec_.n_agents; ++i)
      if (actions[i] < 0 || actions[i] >= spec_.n_actions[i])
        throw std::out_of_range("step: action out of range for agent " + std::to_string(i));
    apply_actions(actions);
    world_.t += 1;
    StepResult r;
    r.reward = reward();
    r.done = world_.t >= world_.max_steps;
    r.obs = joint_obs();
    return r;
  }

  std::vector<double> observe(int agent) const override {
    if (agent < 0 || agent >= spec_.n_agents) throw std::out_of_range("observe: bad agent index");
    std::vector<double> o = build_obs(agent);
    if (static_cast<int>(o.size()) != spec_.obs_dims[agent])
      throw std::logic_error("observe: dimension drift in scenario " + spec_.id);
    return o;
  }

  const ParticleWorld& world() const { return world_; }

 protected:
  virtual void on_reset() {}
  virtual double reward() const = 0;
  virtual std::vector<double> build_obs(int agent) const = 0;

  virtual void apply_actions(const std::vector<int>& actions) {
    std::vector<Vec2> forces(spec_.n_agents);
    for (int i = 0; i < spec_.n_agents; ++i) forces[i] = envdetail::force_from_move(actions[i], gain_);
    physics_step(world_, forces);
  }

  std::vector<std::vector<double>> joint_obs() const {
    std::vector<std::vector<double>> obs;
    for (int i = 0; i < spec_.n_agents; ++i) obs.push_back(observe(i));
    return obs;
  }

  ScenarioSpec spec_;
  int n_landmarks_;
  SplitRng rng_;
  ParticleWorld world_;
  double gain_ = kAccelGain;
};

/// Two heterogeneous agents, one landmark. Agent 0 ("Hear") senses the
/// landmark but not itself; agent 1 ("See") senses both agents but not the
/// landmark. Reward: closest-agent distance (no collision term).
class HearSeeEnv : public ParticleEnvBase {
 public:
  explicit HearSeeEnv(std::uint64_t seed)
      : ParticleEnvBase({"hs", 2, {2, 8}, {5, 5}, kParticleSteps}, 1, seed) {}

 protected:
  double reward() const override { return spread_reward(world_.pos, world_.landmarks, 0); }

  std::vector<double> build_obs(int agent) const override {
    if (agent == 0) return {world_.landmarks[0].x, world_.landmarks[0].y};
    return {world_.pos[0].x, world_.pos[0].y, world_.pos[1].x, world_.pos[1].y,
            world_.vel[0].x, world_.vel[0].y, world_.vel[1].x, world_.vel[1].y};
  }
};

/// Two agents, two landmarks. Agent 0 senses only x components of both
/// agents, agent 1 only y components; both see absolute landmark positions.
/// Layout per agent: [own axis-pos, own axis-vel, other axis-pos, other
/// axis-vel, landmarks x/y...].
class SpreadXY2Env : public ParticleEnvBase {
 public:
  explicit SpreadXY2Env(std::uint64_t seed)
      : ParticleEnvBase({"sxy2", 2, {8, 8}, {5, 5}, kParticleSteps}, 2, seed) {}

 protected:
  double reward() const override {
    return spread_reward(world_.pos, world_.landmarks, count_colliding_pairs(world_.pos));
  }

  std::vector<double> build_obs(int agent) const override {
    int other = 1 - agent;
    std::vector<double> o;
    if (agent == 0)
      o = {world_.pos[agent].x, world_.vel[agent].x, world_.pos[other].x, world_.vel[other].x};
    else
      o = {world_.pos[agent].y, world_.vel[agent].y, world_.pos[other].y, world_.vel[other].y};
    for (const Vec2& lm : world_.landmarks) {
      o.push_back(lm.x);
      o.push_back(lm.y);
    }
    return o;
  }
};

/// Four agents in two teams {0,1} and {2,3}; within a team one agent senses
/// x components, the other y components, of both teammates. All four
/// landmarks visible to everyone; collisions counted across all agents.
class SpreadXY4Env : public ParticleEnvBase {
 public:
  explicit SpreadXY4Env(std::uint64_t seed)
      : ParticleEnvBase({"sxy4", 4, {12, 12, 12, 12}, {5, 5, 5, 5}, kParticleSteps}, 4, seed) {}

 protected:
  double reward() const override {
    return spread_reward(world_.pos, world_.landmarks, count_colliding_pairs(world_.pos));
  }

  std::vector<double> build_obs(int agent) const override {
    int mate = agent ^ 1;  // teams are {0,1} and {2,3}
    bool x_axis = (agent % 2) == 0;
    std::vector<double> o;
    if (x_axis)
      o = {world_.pos[agent].x, world_.vel[agent].x, world_.pos[mate].x, world_.vel[mate].x};
    else
      o = {world_.pos[agent].y, world_.vel[agent].y, world_.pos[mate].y, world_.vel[mate].y};
    for (const Vec2& lm : world_.landmarks) {
      o.push_back(lm.x);
      o.push_back(lm.y);
    }
    return o;
  }
};

/// Three agents, three landmarks; each agent senses only itself plus the
/// absolute landmark positions.
class SpreadBlindfoldEnv : public ParticleEnvBase {
 public:
  explicit SpreadBlindfoldEnv(std::uint64_t seed)
      : ParticleEnvBase({"sbf", 3, {10, 10, 10}, {5, 5, 5}, kParticleSteps}, 3, seed) {}

 protected:
  double reward() const override {
    return spread_reward(world_.pos, world_.landmarks, count_colliding_pairs(world_.pos));
  }

  std::vector<double> build_obs(int agent) const override {
    std::vector<double> o = {world_.pos[agent].x, world_.pos[agent].y, world_.vel[agent].x,
                             world_.vel[agent].y};
    for (const Vec2& lm : world_.landmarks) {
      o.push_back(lm.x);
      o.push_back(lm.y);
    }
    return o;
  }
};

/// Agent 0 (speaker) is static and utters one of three symbols; agent 1
/// (listener) moves among three landmarks. Only the speaker knows the goal;
/// the listener hears the previous symbol. Reward: -distance(listener, goal).
class SpeakerListenerEnv : public ParticleEnvBase {
 public:
  explicit SpeakerListenerEnv(std::uint64_t seed)
      : ParticleEnvBase({"sl", 2, {3, 11}, {3, 5}, kParticleSteps}, 3, seed) {}

 protected:
  void on_reset() override {
    world_.pos[0] = {0, 0};  // speaker never moves
    world_.vel[0] = {0, 0};
    goal_ = rng_.uniform_int(3);
    symbol_ = -1;  // nothing uttered yet
  }

  void apply_actions(const std::vector<int>& actions) override {
    symbol_ = actions[0];
    std::vector<Vec2> forces(2);
    forces[1] = envdetail::force_from_move(actions[1], gain_);
    physics_step(world_, forces);
    world_.pos[0] = {0, 0};
    world_.vel[0] = {0, 0};
  }

  double reward() const override { return -dist(world_.pos[1], world_.landmarks[goal_]); }

  std::vector<double> build_obs(int agent) const override {
    if (agent == 0) {
      std::vector<double> o(3, 0.0);
      o[goal_] = 1.0;
      return o;
    }
    std::vector<double> o = {world_.vel[1].x, world_.vel[1].y};
    for (const Vec2& lm : world_.landmarks) {
      o.push_back(lm.x - world_.pos[1].x);
      o.push_back(lm.y - world_.pos[1].y);
    }
    for (int s = 0; s < 3; ++s) o.push_back(symbol_ == s ? 1.0 : 0.0);
    return o;
  }

 private:
  int goal_ = 0;
  int symbol_ = -1;
};

/// Diagnostic world for model verification: no damping and random initial
/// velocities, so under noop actions every agent keeps a constant velocity
/// and the per-step observation delta is exactly known. Two agents chase one
/// landmark; each sees [own pos, own vel, landmark relative to itself].
class ToyDriftEnv : public ParticleEnvBase {
 public:
  explicit ToyDriftEnv(std::uint64_t seed)
      : ParticleEnvBase({"toy", 2, {6, 6}, {5, 5}, kParticleSteps}, 1, seed) {
    world_.damping = 0.0;
    gain_ = 1.0;
  }

 protected:
  void on_reset() override {
    for (auto& v : world_.vel) v = {rng_.uniform(-0.5, 0.5), rng_.uniform(-0.5, 0.5)};
  }

  double reward() const override {
    double r = 0;
    for (const Vec2& p : world_.pos) r -= 0.5 * dist(p, world_.landmarks[0]);
    return r;
  }

  std::vector<double> build_obs(int agent) const override {
    const Vec2& p = world_.pos[agent];
    const Vec2& v = world_.vel[agent];
    const Vec2& lm = world_.landmarks[0];
    return {p.x, p.y, v.x, v.y, lm.x - p.x, lm.y - p.y};
  }
};

/// 15x15 cooperative foraging: two leveled agents, two foods whose level
/// equals the agents' level sum, so collection requires simultaneous
/// adjacent loading. Sight is a Chebyshev-2 window; unseen slots pad with -1.
class ForagingEnv : public Env {
 public:
  static constexpr int kGrid = 15;
  static constexpr int kSight = 2;
  static constexpr int kMaxSteps = 50;
  static constexpr int kFoods = 2;

  explicit ForagingEnv(std::uint64_t seed)
      : spec_{"lbf", 2, {12, 12}, {6, 6}, kMaxSteps}, rng_(seed) {}

  const ScenarioSpec& spec() const override { return spec_; }

  std::vector<std::vector<double>> reset() override {
    t_ = 0;
    // distinct cells for 2 agents + 2 foods
    std::vector<int> cells;
    while (static_cast<int>(cells.size()) < 2 + kFoods) {
      int c = rng_.uniform_int(kGrid * kGrid);
      if (std::find(cells.begin(), cells.end(), c) == cells.end()) cells.push_back(c);
    }
    for (int i = 0; i < 2; ++i) {
      ax_[i] = cells[i] % kGrid;
      ay_[i] = cells[i] / kGrid;
      level_[i] = 1 + rng_.uniform_int(2);
    }
    int level_sum = level_[0] + level_[1];
    for (int f = 0; f < kFoods; ++f) {
      fx_[f] = cells[2 + f] % kGrid;
      fy_[f] = cells[2 + f] / kGrid;
      flevel_[f] = level_sum;  // forces cooperation
      alive_[f] = true;
    }
    return joint_obs();
  }

  StepResult step(const std::vector<int>& actions) override {
    if (actions.size() != 2) throw std::invalid_argument("step: wrong number of actions");
    for (int a : actions)
      if (a < 0 || a >= 6) throw std::out_of_range("step: foraging action out of range");

    // moves first (load/noop agents stay put); blocked moves are no-ops
    int nx[2], ny[2];
    for (int i = 0; i < 2; ++i) {
      nx[i] = ax_[i];
      ny[i] = ay_[i];
      switch (actions[i]) {
        case 1: ny[i] -= 1; break;  // north
        case 2: ny[i] += 1; break;  // south
        case 3: nx[i] -= 1; break;  // west
        case 4: nx[i] += 1; break;  // east
        default: break;             // noop or load
      }
      if (nx[i] < 0 || nx[i] >= kGrid || ny[i] < 0 || ny[i] >= kGrid) {
        nx[i] = ax_[i];
        ny[i] = ay_[i];
      }
      for (int f = 0; f < kFoods; ++f)
        if (alive_[f] && nx[i] == fx_[f] && ny[i] == fy_[f]) {
          nx[i] = ax_[i];
          ny[i] = ay_[i];
        }
    }
    // mutual blocking: same target, or stepping onto the other's current cell
    if (nx[0] == nx[1] && ny[0] == ny[1]) {
      nx[0] = ax_[0]; ny[0] = ay_[0];
      nx[1] = ax_[1]; ny[1] = ay_[1];
    }
    for (int i = 0; i < 2; ++i) {
      int o = 1 - i;
      if (nx[i] == ax_[o] && ny[i] == ay_[o]) {
        nx[i] = ax_[i];
        ny[i] = ay_[i];
      }
    }
    for (int i = 0; i < 2; ++i) {
      ax_[i] = nx[i];
      ay_[i] = ny[i];
    }

    // cooperative loading
    double reward = 0;
    int total_level = 0;
    for (int f = 0; f < kFoods; ++f) total_level += flevel_[f];
    for (int f = 0; f < kFoods; ++f) {
      if (!alive_[f]) continue;
      int loading_sum = 0;
      for (int i = 0; i < 2; ++i)
        if (actions[i] == 5 && std::abs(ax_[i] - fx_[f]) + std::abs(ay_[i] - fy_[f]) == 1)
          loading_sum += level_[i];
      if (loading_sum >= flevel_[f]) {
        alive_[f] = false;
        reward += static_cast<double>(flevel_[f]) / total_level;
      }
    }

    t_ += 1;
    bool all_gone = !alive_[0] && !alive_[1];
    StepResult r;
    r.reward = reward;
    r.done = all_gone || t_ >= kMaxSteps;
    r.obs = joint_obs();
    return r;
  }

  std::vector<double> observe(int agent) const override {
    if (agent < 0 || agent >= 2) throw std::out_of_range("observe: bad agent index");
    std::vector<double> o = {static_cast<double>(ax_[agent]), static_cast<double>(ay_[agent]),
                             static_cast<double>(level_[agent])};
    for (int f = 0; f < kFoods; ++f) {
      int dx = fx_[f] - ax_[agent];
      int dy = fy_[f] - ay_[agent];
      bool seen = alive_[f] && std::max(std::abs(dx), std::abs(dy)) <= kSight;
      if (seen) {
        o.push_back(dx);
        o.push_back(dy);
        o.push_back(flevel_[f]);
      } else {
        o.insert(o.end(), {-1.0, -1.0, -1.0});
      }
    }
    int other = 1 - agent;
    bool seen = std::max(std::abs(ax_[other] - ax_[agent]), std::abs(ay_[other] - ay_[agent])) <= kSight;
    if (seen) {
      o.push_back(ax_[other]);
      o.push_back(ay_[other]);
      o.push_back(level_[other]);
    } else {
      o.insert(o.end(), {-1.0, -1.0, -1.0});
    }
    return o;
  }

 private:
  std::vector<std::vector<double>> joint_obs() const { return {observe(0), observe(1)}; }

  ScenarioSpec spec_;
  SplitRng rng_;
  int t_ = 0;
  int ax_[2] = {0, 0}, ay_[2] = {0, 0}, level_[2] = {1, 1};
  int fx_[kFoods] = {0}, fy_[kFoods] = {0}, flevel_[kFoods] = {0};
  bool alive_[kFoods] = {false, false};
};

inline std::unique_ptr<Env> make_env(const std::string& id, std::uint64_t seed) {
  if (id == "hs") return std::make_unique<HearSeeEnv>(seed);
  if (id == "sxy2") return std::make_unique<SpreadXY2Env>(seed);
  if (id == "sxy4") return std::make_unique<SpreadXY4Env>(seed);
  if (id == "sbf") return std::make_unique<SpreadBlindfoldEnv>(seed);
  if (id == "sl") return std::make_unique<SpeakerListenerEnv>(seed);
  if (id == "lbf") return std::make_unique<ForagingEnv>(seed);
  if (id == "toy") return std::make_unique<ToyDriftEnv>(seed);
  throw std::invalid_argument("unknown scenario id: " + id);
}

}  // namespace hymarl
