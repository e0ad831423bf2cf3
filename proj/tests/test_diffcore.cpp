#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "hymarl/checkpoint.hpp"
#include "hymarl/gradcheck.hpp"
#include "hymarl/gradsuite.hpp"
#include "hymarl/graph.hpp"
#include "hymarl/nn.hpp"
#include "hymarl/optim.hpp"
#include "hymarl/params.hpp"
#include "hymarl/rng.hpp"

using namespace hymarl;

namespace {
Tensor<double> rnd(int r, int c, SplitRng& rng, double s = 1.0) {
  Tensor<double> t = Tensor<double>::zeros({r, c});
  for (auto& v : t.data) v = rng.uniform(-s, s);
  return t;
}
}  // namespace

TEST_CASE("rng streams are deterministic and independent") {
  SplitRng a = SplitRng::from_master(7, "env");
  SplitRng a2 = SplitRng::from_master(7, "env");
  SplitRng b = SplitRng::from_master(7, "explore");
  bool diverged = false;
  for (int i = 0; i < 64; ++i) {
    double va = a.uniform01();
    REQUIRE(va == a2.uniform01());
    REQUIRE(va >= 0.0);
    REQUIRE(va < 1.0);
    if (va != b.uniform01()) diverged = true;
  }
  REQUIRE(diverged);

  SplitRng parent = SplitRng::from_master(7, "env");
  SplitRng c1 = parent.split("child");
  // splitting does not consume parent state
  REQUIRE(SplitRng::from_master(7, "env").uniform01() == parent.uniform01());
  REQUIRE(c1.uniform01() != parent.uniform01());
}

TEST_CASE("param store rejects duplicates and keeps insertion order") {
  ParamStore<double> ps;
  ps.add("a", Tensor<double>::zeros({1, 2}));
  ps.add("b", Tensor<double>::zeros({2, 2}));
  REQUIRE_THROWS_AS(ps.add("a", Tensor<double>::zeros({1, 1})), std::invalid_argument);
  REQUIRE(ps.name(0) == "a");
  REQUIRE(ps.name(1) == "b");
  REQUIRE_THROWS_AS(ps.at("missing"), std::invalid_argument);

  ParamStore<double> tgt;
  tgt.add("a", Tensor<double>::full({1, 2}, 5.0));
  tgt.add("b", Tensor<double>::full({2, 2}, 5.0));
  tgt.copy_values_from(ps);
  REQUIRE(tgt.at("a").data[0] == 0.0);
}

TEST_CASE("linear identity and zero-input cases") {
  Graph<double> g;
  auto x = g.constant(Tensor<double>::matrix(1, 2, {1, 2}));
  auto w = g.constant(Tensor<double>::matrix(2, 2, {1, 0, 0, 1}));
  auto b = g.constant(Tensor<double>::matrix(1, 2, {0, 0}));
  auto y = g.add_rowvec(g.matmul(x, w), b);
  REQUIRE(g.value(y).data == std::vector<double>{1, 2});

  auto x0 = g.constant(Tensor<double>::matrix(1, 2, {0, 0}));
  auto w2 = g.constant(Tensor<double>::matrix(2, 2, {3, 7, -2, 4}));
  auto b2 = g.constant(Tensor<double>::matrix(1, 2, {3, -1}));
  auto y2 = g.add_rowvec(g.matmul(x0, w2), b2);
  REQUIRE(g.value(y2).data == std::vector<double>{3, -1});

  auto bad = Tensor<double>::matrix(3, 1, {1, 2, 3});
  REQUIRE_THROWS_AS(g.matmul(x, g.constant(bad)), ShapeError);
}

TEST_CASE("gru cell zero fixed point and carry limit") {
  SplitRng rng(1);
  ParamStore<double> ps;
  add_gru(ps, "g", 3, 4, rng);
  for (auto& v : ps.at("g.wx").data) v = 0;
  for (auto& v : ps.at("g.wh").data) v = 0;

  Graph<double> g;
  auto x = g.constant(Tensor<double>::zeros({2, 3}));
  auto h = g.constant(Tensor<double>::zeros({2, 4}));
  auto h2 = gru_cell(g, ps, "g", x, h);
  for (double v : g.value(h2).data) REQUIRE(v == 0.0);

  // large bias on the update-gate block saturates z -> 1, so h' ~ h
  for (int j = 4; j < 8; ++j) ps.at("g.b").data[j] = 50.0;
  Graph<double> g2;
  Tensor<double> hv = rnd(2, 4, rng);
  auto h3 = gru_cell(g2, ps, "g", g2.constant(Tensor<double>::zeros({2, 3})), g2.constant(hv));
  for (std::size_t i = 0; i < hv.data.size(); ++i)
    REQUIRE(std::abs(g2.value(h3).data[i] - hv.data[i]) < 1e-9);
}

TEST_CASE("lstm cell zero fixed point and memory carry") {
  SplitRng rng(2);
  ParamStore<double> ps;
  add_lstm(ps, "l", 3, 4, rng);
  for (auto& v : ps.at("l.wx").data) v = 0;
  for (auto& v : ps.at("l.wh").data) v = 0;
  for (auto& v : ps.at("l.b").data) v = 0;

  Graph<double> g;
  auto [h2, c2] = lstm_cell(g, ps, "l", g.constant(Tensor<double>::zeros({2, 3})),
                            g.constant(Tensor<double>::zeros({2, 4})), g.constant(Tensor<double>::zeros({2, 4})));
  for (double v : g.value(h2).data) REQUIRE(v == 0.0);
  for (double v : g.value(c2).data) REQUIRE(v == 0.0);

  // forget gate saturated open, input gate slammed shut: c' = c
  for (int j = 0; j < 4; ++j) ps.at("l.b").data[j] = -50.0;       // input gate -> 0
  for (int j = 4; j < 8; ++j) ps.at("l.b").data[j] = 50.0;        // forget gate -> 1
  Tensor<double> cv = rnd(2, 4, rng);
  Graph<double> g2;
  auto [h3, c3] = lstm_cell(g2, ps, "l", g2.constant(Tensor<double>::zeros({2, 3})),
                            g2.constant(Tensor<double>::zeros({2, 4})), g2.constant(cv));
  (void)h3;
  for (std::size_t i = 0; i < cv.data.size(); ++i)
    REQUIRE(std::abs(g2.value(c3).data[i] - cv.data[i]) < 1e-9);
}

TEST_CASE("lstm forget-gate bias initialized to one") {
  SplitRng rng(3);
  ParamStore<double> ps;
  add_lstm(ps, "l", 2, 3, rng);
  const auto& b = ps.at("l.b").data;
  for (int j = 0; j < 3; ++j) REQUIRE(b[j] == 0.0);
  for (int j = 3; j < 6; ++j) REQUIRE(b[j] == 1.0);
  for (int j = 6; j < 12; ++j) REQUIRE(b[j] == 0.0);
}

TEST_CASE("gaussian nll closed-form values") {
  Graph<double> g;
  auto mean = g.constant(Tensor<double>::matrix(1, 1, {0}));
  auto logvar = g.constant(Tensor<double>::matrix(1, 1, {0}));
  double at_mode = g.value(g.gaussian_nll(mean, logvar, Tensor<double>::matrix(1, 1, {0}))).data[0];
  REQUIRE(std::abs(at_mode - 0.5 * kLogTwoPi) < 1e-12);
  double one_sigma = g.value(g.gaussian_nll(mean, logvar, Tensor<double>::matrix(1, 1, {1}))).data[0];
  REQUIRE(std::abs(one_sigma - (0.5 * kLogTwoPi + 0.5)) < 1e-12);
}

TEST_CASE("backward: sum and zero-scaled losses") {
  ParamStore<double> ps;
  SplitRng rng(4);
  ps.add("w", rnd(2, 3, rng));

  Graph<double> g;
  auto loss = g.sum_all(g.param(ps, "w"));
  g.backward(loss);
  GradVec<double> gsum = g.grads_for(ps);
  for (double v : gsum[0].data) REQUIRE(v == 1.0);

  Graph<double> g2;
  auto loss2 = g2.scale(g2.sum_all(g2.tanh_op(g2.param(ps, "w"))), 0.0);
  g2.backward(loss2);
  GradVec<double> gzero = g2.grads_for(ps);
  for (double v : gzero[0].data) REQUIRE(v == 0.0);

  Graph<double> g3;
  REQUIRE_THROWS_AS(g3.backward(g3.constant(rnd(2, 2, rng))), std::invalid_argument);
}

TEST_CASE("backward: non-participating parameters get zero tensors") {
  ParamStore<double> ps;
  SplitRng rng(5);
  ps.add("used", rnd(1, 3, rng));
  ps.add("unused", rnd(2, 2, rng));
  Graph<double> g;
  auto loss = g.sum_all(g.sigmoid(g.param(ps, "used")));
  g.backward(loss);
  auto grads = g.grads_for(ps);
  REQUIRE(grads.size() == 2);
  REQUIRE(grads[1].shape == ps.at("unused").shape);
  for (double v : grads[1].data) REQUIRE(v == 0.0);
  for (double v : grads[0].data) REQUIRE(v != 0.0);
}

TEST_CASE("gradient suite: all core ops match finite differences") {
  auto checks = gradient_suite_diffcore(10);
  for (const auto& c : checks) {
    INFO(c.name << " max_rel=" << c.max_rel);
    REQUIRE(c.max_rel < c.threshold);
  }
}

TEST_CASE("finite differences on misc graph ops") {
  SplitRng rng(6);
  // clamp, elu, abs, relu, slice/concat, gather, bmm under one composite loss
  ParamStore<double> ps;
  ps.add("a", rnd(3, 6, rng));
  ps.add("w", rnd(3, 8, rng));
  Tensor<double> mix = rnd(3, 2, rng);
  auto build = [mix](Graph<double>& g, const ParamStore<double>& p) {
    auto a = g.param(p, "a");
    auto left = g.elu(g.slice_cols(a, 0, 3));
    auto right = g.relu(g.slice_cols(a, 3, 6));
    auto cat = g.concat_cols({left, right});
    auto cl = g.clamp(cat, -0.75, 0.75);
    auto q = g.bmm_vec(g.abs_op(g.slice_cols(cl, 0, 4)), g.param(p, "w"), 4, 2);
    auto picked = g.gather_cols(q, {0, 1, 0});
    return g.add(g.weighted_sum(q, mix), g.sum_all(picked));
  };
  REQUIRE(finite_diff_check<double>(ps, build) < 1e-5);
}

TEST_CASE("masked mse forward and gradient") {
  ParamStore<double> ps;
  SplitRng rng(7);
  ps.add("pred", rnd(2, 3, rng));
  Tensor<double> target = rnd(2, 3, rng);
  Tensor<double> mask = Tensor<double>::matrix(2, 3, {1, 0, 1, 1, 1, 0});
  auto build = [target, mask](Graph<double>& g, const ParamStore<double>& p) {
    return g.masked_mse(g.param(p, "pred"), target, mask);
  };
  REQUIRE(finite_diff_check<double>(ps, build) < 1e-6);

  Graph<double> g;
  double v = g.value(g.masked_mse(g.param(ps, "pred"), target, mask)).data[0];
  double manual = 0;
  for (int i : {0, 2, 3, 4}) {
    double d = ps.at("pred").data[i] - target.data[i];
    manual += d * d;
  }
  REQUIRE(std::abs(v - manual / 4.0) < 1e-12);
}

TEST_CASE("clip_global_norm scales, is idempotent, leaves small grads alone") {
  GradVec<double> g1;
  g1.push_back(Tensor<double>::matrix(1, 2, {0.3, 0.4}));  // norm 0.5
  clip_global_norm(g1, 1.0);
  REQUIRE(g1[0].data == std::vector<double>{0.3, 0.4});

  GradVec<double> g2;
  g2.push_back(Tensor<double>::matrix(1, 2, {3, 4}));
  clip_global_norm(g2, 1.0);
  REQUIRE(std::abs(g2[0].data[0] - 0.6) < 1e-12);
  REQUIRE(std::abs(g2[0].data[1] - 0.8) < 1e-12);
  auto snapshot = g2[0].data;
  clip_global_norm(g2, 1.0);
  REQUIRE(g2[0].data == snapshot);

  SplitRng rng(8);
  GradVec<double> ga, gb;
  ga.push_back(rnd(4, 4, rng, 3.0));
  gb.push_back(rnd(2, 5, rng, 3.0));
  clip_global_norm<double>({&ga, &gb}, 1.0);
  std::vector<const GradVec<double>*> view{&ga, &gb};
  REQUIRE(global_norm<double>(view) <= 1.0 + 1e-12);
}

TEST_CASE("adam: zero grad is identity, first step magnitude, scalar descent") {
  SplitRng rng(9);
  ParamStore<double> ps;
  ps.add("w", rnd(2, 2, rng));
  auto before = ps.at("w").data;
  AdamState<double> st = AdamState<double>::for_store(ps);
  GradVec<double> zeros;
  zeros.push_back(Tensor<double>::zeros({2, 2}));
  adam_step(ps, zeros, st, 0.1);
  REQUIRE(ps.at("w").data == before);
  REQUIRE(st.step == 1);

  ParamStore<double> p1;
  p1.add("w", Tensor<double>::matrix(1, 1, {0.0}));
  AdamState<double> s1 = AdamState<double>::for_store(p1);
  GradVec<double> g;
  g.push_back(Tensor<double>::matrix(1, 1, {0.7}));
  adam_step(p1, g, s1, 0.05);
  REQUIRE(std::abs(std::abs(p1.at("w").data[0]) - 0.05) < 1e-6);

  ParamStore<double> p2;
  p2.add("w", Tensor<double>::matrix(1, 1, {1.0}));
  AdamState<double> s2 = AdamState<double>::for_store(p2);
  for (int i = 0; i < 100; ++i) {
    GradVec<double> gw;
    gw.push_back(Tensor<double>::matrix(1, 1, {2.0 * p2.at("w").data[0]}));
    adam_step(p2, gw, s2, 0.05);
  }
  REQUIRE(std::abs(p2.at("w").data[0]) < 0.1);
}

TEST_CASE("finite_diff_check on trivially linear objective is exact") {
  ParamStore<double> ps;
  SplitRng rng(10);
  ps.add("w", rnd(3, 3, rng));
  auto build = [](Graph<double>& g, const ParamStore<double>& p) { return g.sum_all(g.param(p, "w")); };
  REQUIRE(finite_diff_check<double>(ps, build) < 1e-10);
}

TEST_CASE("forward outputs stay finite for bounded inputs") {
  SplitRng rng(11);
  ParamStore<double> ps;
  add_gru(ps, "g", 4, 5, rng);
  add_lstm(ps, "l", 4, 5, rng);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor<double> x = rnd(3, 4, rng, 1e3);
    Tensor<double> h = rnd(3, 5, rng, 1e3);
    Tensor<double> c = rnd(3, 5, rng, 1e3);
    Graph<double> g;
    auto hn = gru_cell(g, ps, "g", g.constant(x), g.constant(h));
    auto [h2, c2] = lstm_cell(g, ps, "l", g.constant(x), g.constant(h), g.constant(c));
    REQUIRE(g.value(hn).all_finite());
    REQUIRE(g.value(h2).all_finite());
    REQUIRE(g.value(c2).all_finite());
  }
}

TEST_CASE("checkpoint round-trips stores through disk") {
  SplitRng rng(12);
  ParamStore<double> ctrl;
  add_linear(ctrl, "fc", 3, 4, rng);
  add_gru(ctrl, "rnn", 4, 4, rng);
  ParamStore<float> model;
  SplitRng mrng = SplitRng::from_master(12, "m");
  add_lstm(model, "core", 5, 6, mrng);

  std::map<std::string, Tensor<double>> blob;
  checkpoint_put(blob, "controller.", ctrl);
  checkpoint_put(blob, "model.", model);

  auto path = std::filesystem::temp_directory_path() / "hymarl_ckpt_test.bin";
  save_checkpoint(path.string(), blob);
  auto loaded = load_checkpoint(path.string());
  REQUIRE(loaded.size() == blob.size());

  SplitRng fresh = SplitRng::from_master(99, "x");
  ParamStore<double> ctrl2;
  add_linear(ctrl2, "fc", 3, 4, fresh);
  add_gru(ctrl2, "rnn", 4, 4, fresh);
  checkpoint_get(loaded, "controller.", ctrl2);
  for (int i = 0; i < ctrl.size(); ++i) REQUIRE(ctrl2.at(i).data == ctrl.at(i).data);

  ParamStore<float> model2;
  SplitRng fresh2 = SplitRng::from_master(98, "z");
  add_lstm(model2, "core", 5, 6, fresh2);
  checkpoint_get(loaded, "model.", model2);
  for (int i = 0; i < model.size(); ++i) REQUIRE(model2.at(i).data == model.at(i).data);

  REQUIRE_THROWS(load_checkpoint((std::filesystem::temp_directory_path() / "nope.bin").string()));
  std::filesystem::remove(path);
}

TEST_CASE("f32 instantiation compiles and trains a step") {
  SplitRng rng(13);
  ParamStore<float> ps;
  add_linear(ps, "fc", 2, 2, rng);
  AdamState<float> st = AdamState<float>::for_store(ps);
  Graph<float> g;
  auto y = linear(g, ps, "fc", g.constant(Tensor<float>::matrix(1, 2, {1.f, -1.f})));
  auto loss = g.sum_all(g.mul(y, y));
  g.backward(loss);
  auto grads = g.grads_for(ps);
  clip_global_norm(grads, 1.0);
  adam_step(ps, grads, st, 1e-3);
  REQUIRE(ps.at("fc.w").all_finite());
}
