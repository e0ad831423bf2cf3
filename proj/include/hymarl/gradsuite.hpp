#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "hymarl/controllers.hpp"
#include "hymarl/gradcheck.hpp"
#include "hymarl/graph.hpp"
#include "hymarl/nn.hpp"
#include "hymarl/params.hpp"
#include "hymarl/rng.hpp"
#include "hymarl/worldmodel.hpp"

namespace hymarl {

/// Finite-difference verification of every differentiable building block, in
/// f64, at several random instantiations each. Shared by the `gradcheck` CLI
/// subcommand and the acceptance suite. Returns true when every max relative
/// error stays under its threshold.
namespace gradsuite_detail {

inline Tensor<double> rand_tensor(int r, int c, SplitRng& rng, double scale = 1.0) {
  Tensor<double> t = Tensor<double>::zeros({r, c});
  for (auto& v : t.data) v = rng.uniform(-scale, scale);
  return t;
}

struct Check {
  std::string name;
  double max_rel = 0;
  double threshold = 1e-5;
  bool pass() const { return max_rel < threshold; }
};

template <class F>
Check run_instances(const std::string& name, double threshold, int instances, F make_case) {
  Check c{name, 0.0, threshold};
  for (int i = 0; i < instances; ++i) {
    SplitRng rng = SplitRng::from_master(0x5eed5000 + i, name);
    ParamStore<double> ps;
    auto build = make_case(ps, rng);
    double rel = finite_diff_check<double>(ps, build);
    c.max_rel = std::max(c.max_rel, rel);
  }
  return c;
}

/// For cases whose parameters live inside a module object rather than a
/// flat store: run_one builds the module and returns its max relative error.
template <class F>
Check run_custom(const std::string& name, double threshold, int instances, F run_one) {
  Check c{name, 0.0, threshold};
  for (int i = 0; i < instances; ++i) {
    SplitRng rng = SplitRng::from_master(0x5eed5000 + i, name);
    c.max_rel = std::max(c.max_rel, run_one(rng));
  }
  return c;
}

}  // namespace gradsuite_detail

inline std::vector<gradsuite_detail::Check> gradient_suite_diffcore(int instances = 10) {
  using namespace gradsuite_detail;
  std::vector<Check> out;

  out.push_back(run_instances("linear", 1e-6, instances, [](ParamStore<double>& ps, SplitRng& rng) {
    ps.add("x", rand_tensor(2, 3, rng));
    ps.add("w", rand_tensor(3, 4, rng));
    ps.add("b", rand_tensor(1, 4, rng));
    Tensor<double> mix = rand_tensor(2, 4, rng);
    return [mix](Graph<double>& g, const ParamStore<double>& p) {
      auto y = g.add_rowvec(g.matmul(g.param(p, "x"), g.param(p, "w")), g.param(p, "b"));
      return g.weighted_sum(y, mix);
    };
  }));

  out.push_back(run_instances("gru_cell", 1e-5, instances, [](ParamStore<double>& ps, SplitRng& rng) {
    ps.add("x", rand_tensor(2, 3, rng));
    ps.add("h", rand_tensor(2, 4, rng));
    add_gru(ps, "gru", 3, 4, rng);
    Tensor<double> mix = rand_tensor(2, 4, rng);
    return [mix](Graph<double>& g, const ParamStore<double>& p) {
      auto h2 = gru_cell(g, p, "gru", g.param(p, "x"), g.param(p, "h"));
      return g.weighted_sum(h2, mix);
    };
  }));

  out.push_back(run_instances("lstm_cell", 1e-5, instances, [](ParamStore<double>& ps, SplitRng& rng) {
    ps.add("x", rand_tensor(2, 3, rng));
    ps.add("h", rand_tensor(2, 4, rng));
    ps.add("c", rand_tensor(2, 4, rng));
    add_lstm(ps, "lstm", 3, 4, rng);
    Tensor<double> mh = rand_tensor(2, 4, rng);
    Tensor<double> mc = rand_tensor(2, 4, rng);
    return [mh, mc](Graph<double>& g, const ParamStore<double>& p) {
      auto [h2, c2] = lstm_cell(g, p, "lstm", g.param(p, "x"), g.param(p, "h"), g.param(p, "c"));
      return g.add(g.weighted_sum(h2, mh), g.weighted_sum(c2, mc));
    };
  }));

  out.push_back(run_instances("gaussian_nll", 1e-6, instances, [](ParamStore<double>& ps, SplitRng& rng) {
    ps.add("mean", rand_tensor(2, 3, rng));
    ps.add("logvar", rand_tensor(2, 3, rng));
    Tensor<double> target = rand_tensor(2, 3, rng);
    return [target](Graph<double>& g, const ParamStore<double>& p) {
      return g.gaussian_nll(g.param(p, "mean"), g.param(p, "logvar"), target);
    };
  }));

  out.push_back(
      run_instances("lstm_2step_unroll", 1e-5, instances, [](ParamStore<double>& ps, SplitRng& rng) {
        ps.add("x0", rand_tensor(2, 3, rng));
        ps.add("x1", rand_tensor(2, 3, rng));
        add_lstm(ps, "lstm", 3, 4, rng);
        Tensor<double> mix = rand_tensor(2, 4, rng);
        return [mix](Graph<double>& g, const ParamStore<double>& p) {
          auto cell = lstm_nodes(g, p, "lstm");
          auto h = g.constant(Tensor<double>::zeros({2, 4}));
          auto c = g.constant(Tensor<double>::zeros({2, 4}));
          auto [h1, c1] = lstm_cell(g, cell, g.param(p, "x0"), h, c);
          auto [h2, c2] = lstm_cell(g, cell, g.param(p, "x1"), h1, c1);
          (void)c2;
          return g.weighted_sum(h2, mix);
        };
      }));

  return out;
}

/// Composite blocks used by the trainers: the recurrent Q step, the
/// monotonic mixing layer, and the predictive-model loss over an episode.
inline std::vector<gradsuite_detail::Check> gradient_suite_modules(int instances = 10) {
  using namespace gradsuite_detail;
  std::vector<Check> out;

  out.push_back(run_instances("q_forward", 1e-5, instances, [](ParamStore<double>& ps, SplitRng& rng) {
    add_gru(ps, "rnn", 3, 4, rng);
    add_linear(ps, "head", 4, 2, rng);
    ps.add("x0", rand_tensor(2, 3, rng));
    ps.add("x1", rand_tensor(2, 3, rng));
    Tensor<double> m0 = rand_tensor(2, 2, rng);
    Tensor<double> m1 = rand_tensor(2, 2, rng);
    return [m0, m1](Graph<double>& g, const ParamStore<double>& p) {
      QNetNodes<double> n{gru_nodes(g, p, "rnn"), linear_nodes(g, p, "head")};
      auto h = g.constant(Tensor<double>::zeros({2, 4}));
      auto [q0, h1] = q_forward_nodes(g, n, g.param(p, "x0"), h);
      auto [q1, h2] = q_forward_nodes(g, n, g.param(p, "x1"), h1);
      (void)h2;
      return g.add(g.weighted_sum(q0, m0), g.weighted_sum(q1, m1));
    };
  }));

  out.push_back(run_instances("qmix_mixing", 1e-5, instances, [](ParamStore<double>& ps, SplitRng& rng) {
    const int n_agents = 2, state_dim = 3, embed = 2, hyper = 3;
    add_linear(ps, "hw1a", state_dim, hyper, rng);
    add_linear(ps, "hw1b", hyper, n_agents * embed, rng);
    add_linear(ps, "hb1", state_dim, embed, rng);
    add_linear(ps, "hw2a", state_dim, hyper, rng);
    add_linear(ps, "hw2b", hyper, embed, rng);
    add_linear(ps, "hva", state_dim, hyper, rng);
    add_linear(ps, "hvb", hyper, 1, rng);
    ps.add("q", rand_tensor(2, n_agents, rng));
    ps.add("state", rand_tensor(2, state_dim, rng));
    Tensor<double> mix = rand_tensor(2, 1, rng);
    return [mix](Graph<double>& g, const ParamStore<double>& p) {
      MixerNodes<double> n{linear_nodes(g, p, "hw1a"), linear_nodes(g, p, "hw1b"),
                           linear_nodes(g, p, "hb1"),  linear_nodes(g, p, "hw2a"),
                           linear_nodes(g, p, "hw2b"), linear_nodes(g, p, "hva"),
                           linear_nodes(g, p, "hvb"),  2,
                           2};
      auto qtot = mixer_forward_nodes(g, n, g.param(p, "q"), g.param(p, "state"));
      return g.weighted_sum(qtot, mix);
    };
  }));

  out.push_back(run_custom("model_loss_3step", 1e-5, instances, [](SplitRng& rng) {
    PredictiveModel<double> m = PredictiveModel<double>::make({2, 3}, 4, rng);
    std::vector<std::vector<std::vector<double>>> stream;
    for (int t = 0; t < 4; ++t) {
      std::vector<std::vector<double>> joint{{rng.uniform(-1, 1), rng.uniform(-1, 1)},
                                             {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)}};
      stream.push_back(joint);
    }
    ModelEpisode<double> ep = make_model_episode<double>(stream);
    auto build = [&m, &ep](Graph<double>& g, const ParamStore<double>&) {
      return model_loss_nodes(g, m, {&ep});
    };
    // Wider step: the NLL's exp(-logvar) terms leave tiny gradients on some
    // elements, where central differences at 1e-5 lose digits to cancellation.
    return finite_diff_check<double>(m.params, build, 1e-4);
  }));

  return out;
}

inline bool report_checks(const std::vector<gradsuite_detail::Check>& checks, std::FILE* out) {
  bool all = true;
  for (const auto& c : checks) {
    std::fprintf(out, "gradcheck %-24s max_rel=%.3e  threshold=%.0e  %s\n", c.name.c_str(), c.max_rel,
                 c.threshold, c.pass() ? "PASS" : "FAIL");
    all = all && c.pass();
  }
  return all;
}

inline bool run_gradient_suite(std::FILE* out) {
  std::vector<gradsuite_detail::Check> checks = gradient_suite_diffcore();
  std::vector<gradsuite_detail::Check> more = gradient_suite_modules();
  checks.insert(checks.end(), more.begin(), more.end());
  return report_checks(checks, out);
}

}  // namespace hymarl
