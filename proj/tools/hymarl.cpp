#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "hymarl/gradsuite.hpp"
#include "hymarl/harness.hpp"

using namespace hymarl;

int main(int argc, char** argv) {
  CLI::App app{"hybrid-execution multi-agent RL workbench"};
  app.require_subcommand(1);

  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "finite-difference check of all differentiable ops");

  std::string config_path;
  long long seed = -1;
  CLI::App* train = app.add_subcommand("train", "run one training run from a config file");
  train->add_option("--config", config_path, "config file (key=value with sections)")->required();
  train->add_option("--seed", seed, "master seed (overrides the config)");

  std::string ckpt_dir, comm_spec = "default";
  int rollouts = 100;
  CLI::App* eval = app.add_subcommand("eval", "evaluate a trained run under a communication scheme");
  eval->add_option("--ckpt", ckpt_dir, "run directory holding config.ini and checkpoints/")->required();
  eval->add_option("--comm", comm_spec, "scheme: fixed:<p> | default | asymmetric | dynamic[:<n>]");
  eval->add_option("--rollouts", rollouts, "greedy evaluation rollouts");

  std::string sweep_dir;
  int sweep_rollouts = 100;
  CLI::App* sweep = app.add_subcommand("sweep", "evaluate over the communication-level grid");
  sweep->add_option("--ckpt", sweep_dir, "run directory")->required();
  sweep->add_option("--rollouts", sweep_rollouts, "rollouts per grid point");

  std::string dump_dir;
  int horizon = 4;
  CLI::App* dump = app.add_subcommand("predict-dump", "dump autoregressive model predictions");
  dump->add_option("--ckpt", dump_dir, "run directory")->required();
  dump->add_option("--horizon", horizon, "prediction horizon in steps");

  std::string plot_dir;
  CLI::App* plot = app.add_subcommand("plot", "regenerate SVG charts from run CSVs");
  plot->add_option("--run", plot_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
    if (gradcheck->parsed()) {
      bool ok = run_gradient_suite(stdout);
      return ok ? 0 : 1;
    }
    if (train->parsed()) {
      ExperimentConfig cfg = ExperimentConfig::resolve(ConfigMap::parse_file(config_path));
      if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
      TrainOutcome out = train_run<float>(cfg);
      std::printf("{\"run_dir\": \"%s\", \"final_mean\": %s, \"ci_lo\": %s, \"ci_hi\": %s}\n",
                  out.run_dir.c_str(), fmt_g(out.final_eval.mean).c_str(),
                  fmt_g(out.final_eval.lo).c_str(), fmt_g(out.final_eval.hi).c_str());
      return 0;
    }
    if (eval->parsed()) {
      Policy<float> pol = load_policy<float>(ckpt_dir);
      EvalReport r = run_eval(pol, CommScheme::parse(comm_spec), rollouts,
                              SplitRng::from_master(pol.cfg.seed, "eval-cli"),
                              SplitRng::from_master(pol.cfg.seed, "boot-cli"));
      std::printf("{\"comm\": \"%s\", \"n\": %d, \"mean\": %s, \"ci_lo\": %s, \"ci_hi\": %s}\n",
                  r.comm.c_str(), r.n, fmt_g(r.mean).c_str(), fmt_g(r.lo).c_str(),
                  fmt_g(r.hi).c_str());
      return 0;
    }
    if (sweep->parsed()) {
      auto rows = sweep_p_run<float>(sweep_dir, sweep_rollouts);
      for (const auto& [p, r] : rows)
        std::printf("{\"p\": %s, \"mean\": %s, \"ci_lo\": %s, \"ci_hi\": %s}\n", fmt_g(p).c_str(),
                    fmt_g(r.mean).c_str(), fmt_g(r.lo).c_str(), fmt_g(r.hi).c_str());
      return 0;
    }
    if (dump->parsed()) {
      std::fputs(predict_dump<float>(dump_dir, horizon).c_str(), stdout);
      return 0;
    }
    if (plot->parsed()) {
      plot_run(plot_dir);
      std::printf("{\"plotted\": \"%s\"}\n", plot_dir.c_str());
      return 0;
    }
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "{\"error\": \"%s\"}\n", e.what());
    return 1;
  }
  return 0;
}
