#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hymarl/gradsuite.hpp"
#include "hymarl/harness.hpp"

using namespace hymarl;
namespace fs = std::filesystem;

namespace {

std::string tmp_dir(const std::string& leaf) {
  return (fs::temp_directory_path() / leaf).string();
}

// Small, fast toy-scenario config shared by the run-directory tests.
std::string toy_config(const std::string& strategy, const std::string& out_dir, int seed,
                       int total_steps = 1500) {
  return "[run]\n"
         "scenario = toy\n"
         "algo = iql\n"
         "strategy = " + strategy + "\n"
         "out_dir = " + out_dir + "\n"
         "total_steps = " + std::to_string(total_steps) + "\n"
         "eval_every = 600\n"
         "eval_rollouts = 3\n"
         "final_rollouts = 5\n"
         "seed = " + std::to_string(seed) + "\n"
         "[controllers]\n"
         "hidden_dim = 8\n"
         "replay_episodes = 64\n"
         "batch = 8\n"
         "epsilon_anneal = 1000\n"
         "[worldmodel]\n"
         "hidden = 8\n"
         "batch = 8\n";
}

// Lazily trained maro run reused across test cases.
const std::string& maro_run_dir() {
  static std::string run_dir = [] {
    std::string out = tmp_dir("hymarl_harness_maro");
    fs::remove_all(out);
    auto cfg = ExperimentConfig::resolve(ConfigMap::parse_string(toy_config("maro", out, 3)));
    return train_run<float>(cfg).run_dir;
  }();
  return run_dir;
}

double param_checksum(const std::vector<QNet<float>>& nets) {
  double s = 0;
  for (const auto& net : nets)
    for (int i = 0; i < net.params.size(); ++i)
      for (float v : net.params.at(i).data) s += static_cast<double>(v);
  return s;
}

Policy<float> fresh_policy(StrategyId strategy, std::uint64_t seed) {
  Policy<float> pol;
  pol.cfg.scenario = "toy";
  pol.cfg.algo = "iql";
  pol.cfg.strategy = strategy;
  pol.cfg.hidden = 8;
  pol.cfg.seed = seed;
  pol.spec = make_env("toy", 0)->spec();
  SplitRng rng(seed);
  for (int i = 0; i < pol.spec.n_agents; ++i)
    pol.nets.push_back(QNet<float>::make(input_dim(strategy, pol.spec, i), pol.cfg.hidden,
                                         pol.spec.n_actions[i], rng));
  if (strategy_trains_model(strategy))
    pol.model = PredictiveModel<float>::make(pol.spec.obs_dims, 8, rng);
  return pol;
}

}  // namespace

TEST_CASE("bootstrap_ci: degenerate and known-width cases") {
  SplitRng rng(42);

  SplitRng r1 = rng.split("single");
  auto [lo1, hi1] = bootstrap_ci({3.5}, r1);
  REQUIRE(lo1 == 3.5);
  REQUIRE(hi1 == 3.5);

  std::vector<double> flat(40, -2.25);
  SplitRng r2 = rng.split("flat");
  auto [lo2, hi2] = bootstrap_ci(flat, r2);
  REQUIRE(lo2 == -2.25);
  REQUIRE(hi2 == -2.25);

  // N(0,1) sample of 100: CI width should be near 2 * 1.96 / sqrt(100).
  std::vector<double> xs;
  SplitRng draw = rng.split("normal");
  for (int i = 0; i < 100; ++i) xs.push_back(draw.normal());
  SplitRng r3 = rng.split("boot");
  auto [lo3, hi3] = bootstrap_ci(xs, r3);
  double m = mean_of(xs);
  REQUIRE(lo3 <= m);
  REQUIRE(hi3 >= m);
  double width = hi3 - lo3;
  REQUIRE(width > 0.7 * 0.392);
  REQUIRE(width < 1.3 * 0.392);

  SplitRng r4 = rng.split("empty");
  REQUIRE_THROWS_AS(bootstrap_ci({}, r4), std::invalid_argument);
  REQUIRE_THROWS_AS(mean_of({}), std::invalid_argument);
}

TEST_CASE("config: parsing, defaults, and validation") {
  ConfigMap m = ConfigMap::parse_string(
      "# comment line\n"
      "[run]\n"
      "scenario = lbf   # trailing comment\n"
      "algo = qmix\n"
      "\n"
      "[controllers]\n"
      "gamma = 0.97\n");
  REQUIRE(m.get_str("run.scenario", "") == "lbf");
  REQUIRE(m.get_num("controllers.gamma", 0) == 0.97);

  ExperimentConfig c = ExperimentConfig::resolve(m);
  REQUIRE(c.lr == 1e-4);            // lbf + qmix family default
  REQUIRE(c.eps_anneal == 100000);  // lbf family default
  REQUIRE(c.gamma == 0.97);         // explicit override wins
  REQUIRE(c.hidden == 256);
  REQUIRE(c.target_update == 200);
  REQUIRE(c.reward_standardisation);

  ExperimentConfig mpe =
      ExperimentConfig::resolve(ConfigMap::parse_string("[run]\nscenario = sl\nalgo = iql\n"));
  REQUIRE(mpe.lr == 5e-4);
  REQUIRE(mpe.eps_anneal == 500000);

  REQUIRE_THROWS_AS(ExperimentConfig::resolve(ConfigMap::parse_string("[run]\nbogus_key = 1\n")),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(ConfigMap::parse_string("[run]\nseed = 1\nseed = 2\n"), std::invalid_argument);
  REQUIRE_THROWS_AS(ExperimentConfig::resolve(ConfigMap::parse_string("[run]\nscenario = nope\n")),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(ConfigMap::parse_string("[run]\nno_equals_here\n"), std::invalid_argument);
}

TEST_CASE("config: canonical serialization round-trips") {
  ConfigMap m = ConfigMap::parse_string(
      "[run]\n"
      "scenario = hs\nalgo = qmix\nstrategy = maro_drop\nout_dir = /tmp/x\n"
      "total_steps = 12345\nseed = 9\neval_comm = dynamic:5\n"
      "[controllers]\n"
      "learning_rate = 0.00025\nhidden_dim = 64\ngrad_clip = 10\n"
      "[worldmodel]\n"
      "hidden = 32\n"
      "[mixer]\n"
      "embed = 16\n");
  ExperimentConfig a = ExperimentConfig::resolve(m);
  ExperimentConfig b = ExperimentConfig::resolve(ConfigMap::parse_string(a.to_text()));
  REQUIRE(b.scenario == a.scenario);
  REQUIRE(b.algo == a.algo);
  REQUIRE(b.strategy == a.strategy);
  REQUIRE(b.out_dir == a.out_dir);
  REQUIRE(b.total_steps == a.total_steps);
  REQUIRE(b.seed == a.seed);
  REQUIRE(b.eval_comm.str() == "dynamic:5");
  REQUIRE(b.lr == a.lr);
  REQUIRE(b.hidden == 64);
  REQUIRE(b.grad_clip == 10.0);
  REQUIRE(b.model_hidden == 32);
  REQUIRE(b.mix_embed == 16);
  REQUIRE(b.eps_anneal == a.eps_anneal);
}

TEST_CASE("svg: chart structure and escaping") {
  Series s;
  s.label = "a<b&c";
  s.x = {0, 1, 2};
  s.y = {1.0, -0.5, 2.0};
  s.lo = {0.5, -1.0, 1.5};
  s.hi = {1.5, 0.0, 2.5};
  std::string svg = line_chart_svg("t<itle>", "x&axis", "y", {s});
  REQUIRE(svg.rfind("<?xml", 0) == 0);
  REQUIRE(svg.find("<svg") != std::string::npos);
  REQUIRE(svg.find("</svg>") != std::string::npos);
  REQUIRE(svg.find("<polyline") != std::string::npos);
  REQUIRE(svg.find("<polygon") != std::string::npos);  // CI band
  REQUIRE(svg.find("t&lt;itle&gt;") != std::string::npos);
  REQUIRE(svg.find("x&amp;axis") != std::string::npos);
  REQUIRE(svg.find("a&lt;b&amp;c") != std::string::npos);
  REQUIRE(svg.find("t<itle>") == std::string::npos);

  REQUIRE_THROWS_AS(line_chart_svg("t", "x", "y", {}), std::invalid_argument);
}

TEST_CASE("train_run: artifacts, exact headers, and byte determinism") {
  std::string out_a = tmp_dir("hymarl_harness_det_a");
  std::string out_b = tmp_dir("hymarl_harness_det_b");
  fs::remove_all(out_a);
  fs::remove_all(out_b);
  auto cfg_a = ExperimentConfig::resolve(ConfigMap::parse_string(toy_config("md", out_a, 5, 1200)));
  auto cfg_b = ExperimentConfig::resolve(ConfigMap::parse_string(toy_config("md", out_b, 5, 1200)));
  TrainOutcome a = train_run<float>(cfg_a);
  TrainOutcome b = train_run<float>(cfg_b);
  REQUIRE(a.run_dir == out_a + "/seed5");

  for (const char* f : {"training_curve.csv", "metrics.csv", "episodes.jsonl", "summary.csv",
                        "checkpoints/final.ckpt"}) {
    INFO(f);
    REQUIRE(read_text_file(a.run_dir + "/" + f) == read_text_file(b.run_dir + "/" + f));
  }
  for (const char* f : {"config.ini", "run_meta.txt", "training_curve.svg"})
    REQUIRE(fs::exists(a.run_dir + "/" + f));

  std::string curve = read_text_file(a.run_dir + "/training_curve.csv");
  REQUIRE(curve.rfind("step,return,ci_lo,ci_hi\n", 0) == 0);
  std::string metrics = read_text_file(a.run_dir + "/metrics.csv");
  REQUIRE(metrics.rfind("step,return,ci_lo,ci_hi,td_loss,model_loss,epsilon\n", 0) == 0);
  // one mid-training eval at 600 steps plus the final eval at 1200
  REQUIRE(harness_detail::parse_csv(curve, 4).size() == 2);

  // a non-model strategy must not persist model weights
  auto ckpt = load_checkpoint(a.run_dir + "/checkpoints/final.ckpt");
  for (const auto& [k, v] : ckpt) REQUIRE(k.rfind("model.", 0) != 0);
  REQUIRE(ckpt.count("run.reward_stats") == 1);

  auto maro_ckpt = load_checkpoint(maro_run_dir() + "/checkpoints/final.ckpt");
  bool has_model = false;
  for (const auto& [k, v] : maro_ckpt) has_model = has_model || k.rfind("model.", 0) == 0;
  REQUIRE(has_model);
}

TEST_CASE("checkpoint round-trip reproduces the recorded final evaluation") {
  Policy<float> pol = load_policy<float>(maro_run_dir());
  REQUIRE(pol.cfg.strategy == StrategyId::maro);
  REQUIRE(pol.model.has_value());
  REQUIRE(pol.cfg.seed == 3);

  EvalReport r = run_eval(pol, pol.cfg.eval_comm, pol.cfg.final_rollouts,
                          SplitRng::from_master(pol.cfg.seed, "eval").split("final"),
                          SplitRng::from_master(pol.cfg.seed, "bootstrap").split("final"));
  // summary row: strategy,algo,scenario,mean,ci_lo,ci_hi,n -- parse the tail
  std::string text = read_text_file(maro_run_dir() + "/summary.csv");
  auto second_line = text.substr(text.find('\n') + 1);
  std::vector<std::string> cells;
  std::istringstream ls(second_line);
  std::string cell;
  while (std::getline(ls, cell, ',')) cells.push_back(cell);
  REQUIRE(cells.size() == 7);
  REQUIRE(cells[0] == "maro");
  REQUIRE(std::stod(cells[3]) == r.mean);  // %.17g round-trips doubles exactly
  REQUIRE(std::stod(cells[4]) == r.lo);
  REQUIRE(std::stod(cells[5]) == r.hi);
  REQUIRE(std::stoi(cells[6]) == r.n);
}

TEST_CASE("run_eval: determinism, stream separation, const policy") {
  Policy<float> pol = fresh_policy(StrategyId::masked_joint, 11);
  double before = param_checksum(pol.nets);

  // 30 rollouts: enough distinct resample means that re-randomizing the
  // bootstrap stream is all but guaranteed to move the CI endpoints
  SplitRng ev = SplitRng::from_master(11, "e");
  SplitRng bo = SplitRng::from_master(11, "b");
  EvalReport r1 = run_eval(pol, CommScheme::parse("fixed:0.5"), 30, ev, bo);
  EvalReport r2 = run_eval(pol, CommScheme::parse("fixed:0.5"), 30, ev, bo);
  REQUIRE(r1.mean == r2.mean);
  REQUIRE(r1.lo == r2.lo);
  REQUIRE(r1.hi == r2.hi);
  REQUIRE(r1.n == 30);

  // same rollout stream, different bootstrap stream: same mean, new CI draws
  EvalReport r3 = run_eval(pol, CommScheme::parse("fixed:0.5"), 30, ev, SplitRng::from_master(11, "b2"));
  REQUIRE(r3.mean == r1.mean);
  REQUIRE((r3.lo != r1.lo || r3.hi != r1.hi));

  // different rollout stream moves the mean
  EvalReport r4 = run_eval(pol, CommScheme::parse("fixed:0.5"), 30, SplitRng::from_master(11, "e2"), bo);
  REQUIRE(r4.mean != r1.mean);

  REQUIRE(param_checksum(pol.nets) == before);
}

TEST_CASE("run_eval: oracle is always evaluated at full communication") {
  Policy<float> pol = fresh_policy(StrategyId::oracle, 13);

  // direct rollouts under partial communication violate the oracle contract
  REQUIRE_THROWS_WITH(eval_returns(pol, CommScheme::parse("fixed:0.3"), 3, SplitRng::from_master(13, "e")),
                      Catch::Matchers::ContainsSubstring("protocol violation"));

  // the eval entry point substitutes full communication
  EvalReport r = run_eval(pol, CommScheme::parse("fixed:0.3"), 3, SplitRng::from_master(13, "e"),
                          SplitRng::from_master(13, "b"));
  REQUIRE(r.comm == CommScheme::fixed_p(1.0).str());
  REQUIRE(r.n == 3);
}

TEST_CASE("eval without a required model checkpoint is an error") {
  Policy<float> pol = fresh_policy(StrategyId::maro, 17);
  pol.model.reset();
  REQUIRE_THROWS_AS(eval_returns(pol, CommScheme::parse("default"), 2, SplitRng::from_master(17, "e")),
                    std::logic_error);
}

TEST_CASE("sweep_p_run: grid, artifacts, and agreement with run_eval") {
  auto rows = sweep_p_run<float>(maro_run_dir(), 4);
  REQUIRE(rows.size() == 11);
  for (int k = 0; k <= 10; ++k) REQUIRE(rows[k].first == k / 10.0);

  std::string csv = read_text_file(maro_run_dir() + "/sweep_p.csv");
  REQUIRE(csv.rfind("p,mean,ci_lo,ci_hi\n", 0) == 0);
  REQUIRE(harness_detail::parse_csv(csv, 4).size() == 11);
  REQUIRE(fs::exists(maro_run_dir() + "/sweep_p.svg"));

  // the p = 1 grid point is exactly run_eval under fixed:1 on the sweep streams
  Policy<float> pol = load_policy<float>(maro_run_dir());
  EvalReport direct = run_eval(pol, CommScheme::fixed_p(1.0), 4,
                               SplitRng::from_master(pol.cfg.seed, "sweep").split(std::uint64_t{10}),
                               SplitRng::from_master(pol.cfg.seed, "sweep-boot").split(std::uint64_t{10}));
  REQUIRE(rows[10].second.mean == direct.mean);
  REQUIRE(rows[10].second.lo == direct.lo);
  REQUIRE(rows[10].second.hi == direct.hi);
}

TEST_CASE("sweep_p_run: oracle has a single full-communication row") {
  std::string out = tmp_dir("hymarl_harness_oracle");
  fs::remove_all(out);
  auto cfg = ExperimentConfig::resolve(ConfigMap::parse_string(toy_config("oracle", out, 2, 400)));
  TrainOutcome t = train_run<float>(cfg);
  auto rows = sweep_p_run<float>(t.run_dir, 3);
  REQUIRE(rows.size() == 1);
  REQUIRE(rows[0].first == 1.0);
}

TEST_CASE("plot_run regenerates charts from CSV artifacts") {
  fs::remove(maro_run_dir() + "/training_curve.svg");
  plot_run(maro_run_dir());
  std::string svg = read_text_file(maro_run_dir() + "/training_curve.svg");
  REQUIRE(svg.rfind("<?xml", 0) == 0);
  REQUIRE(svg.find("</svg>") != std::string::npos);

  REQUIRE_THROWS_AS(plot_run(tmp_dir("hymarl_harness_missing")), std::runtime_error);
}

TEST_CASE("predict_dump emits one line per step with horizon predictions") {
  std::string out = predict_dump<float>(maro_run_dir(), 3);
  REQUIRE(!out.empty());
  REQUIRE(out.rfind("{\"t\": 0, \"true_next\": [", 0) == 0);
  int lines = 0;
  for (char ch : out) lines += ch == '\n';
  REQUIRE(lines == 25);  // toy episodes run a fixed 25 steps
  // three autoregressive steps -> three inner arrays in the predicted field
  auto first_line = out.substr(0, out.find('\n'));
  auto pred = first_line.substr(first_line.find("\"predicted\""));
  int opens = 0;
  for (char ch : pred) opens += ch == '[';
  REQUIRE(opens == 1 + 3);

  REQUIRE_THROWS_AS(predict_dump<float>(maro_run_dir(), 0), std::invalid_argument);
}

TEST_CASE("gradient suite passes end to end") {
  auto checks = gradient_suite_diffcore(3);
  auto more = gradient_suite_modules(3);
  checks.insert(checks.end(), more.begin(), more.end());
  for (const auto& c : checks) {
    INFO(c.name);
    REQUIRE(c.pass());
  }
}
