#include <cmath>
#include <random>

#include "danet/model.hpp"
#include "doctest.h"
#include "fd_check.hpp"

using namespace danet;

namespace {

Tensor random_tensor(Shape s, std::uint64_t seed, double lo = -1, double hi = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(lo, hi);
  Tensor t(std::move(s));
  for (double& v : t.data) v = uni(rng);
  return t;
}

}  // namespace

TEST_CASE("average combine of equal tensors is a fixed point") {
  Graph g;
  Tensor c = random_tensor({1, 8}, 3);
  auto n = g.input(c);
  auto out = combine(g, CombineRule::Average, {n}, n);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(g.value(out)[i] == doctest::Approx(c[i]));
}

TEST_CASE("additive combine sums history and new") {
  Graph g;
  auto out = combine(g, CombineRule::Additive,
                     {g.input(Tensor::vector({1})), g.input(Tensor::vector({2}))},
                     g.input(Tensor::vector({3})));
  CHECK(g.value(out)[0] == doctest::Approx(6));
}

TEST_CASE("average combine is the arithmetic mean of all terms") {
  Graph g;
  auto out = combine(g, CombineRule::Average,
                     {g.input(Tensor::vector({0})), g.input(Tensor::vector({2}))},
                     g.input(Tensor::vector({4})));
  CHECK(g.value(out)[0] == doctest::Approx(2));
}

TEST_CASE("combine requires non-empty history and matching shapes") {
  Graph g;
  auto a = g.input(Tensor::vector({1, 2}));
  auto b = g.input(Tensor::vector({1, 2, 3}));
  CHECK_THROWS_AS(combine(g, CombineRule::Average, {}, a), ContractError);
  CHECK_THROWS_AS(combine(g, CombineRule::Additive, {a}, b), ShapeError);
}

TEST_CASE("average equals additive divided by history size plus one") {
  std::mt19937_64 seed_rng(17);
  for (int rep = 0; rep < 10; ++rep) {
    Graph g;
    std::vector<Graph::NodeId> history;
    const int hlen = 1 + rep % 4;
    for (int i = 0; i < hlen; ++i) history.push_back(g.input(random_tensor({2, 6}, seed_rng())));
    auto fresh = g.input(random_tensor({2, 6}, seed_rng()));
    const Tensor& avg = g.value(combine(g, CombineRule::Average, history, fresh));
    const Tensor& add = g.value(combine(g, CombineRule::Additive, history, fresh));
    for (std::size_t i = 0; i < avg.size(); ++i)
      CHECK(std::fabs(avg[i] - add[i] / (hlen + 1)) < 1e-12);
  }
}

TEST_CASE("concat combine width is the sum of input widths") {
  Graph g;
  std::vector<Graph::NodeId> history = {g.input(Tensor({2, 3})), g.input(Tensor({2, 5}))};
  auto out = combine(g, CombineRule::Concat, history, g.input(Tensor({2, 4})));
  CHECK(g.value(out).shape == Shape{2, 12});
}

TEST_CASE("dense average block with zero transforms halves the input") {
  // Hand-unrolled oracle for x_l = (H_l + sum x_i)/(l+1) with H == 0:
  // every x_l collapses to x0/2, so x4 = x0/2.
  const std::size_t w = 6;
  Graph g;
  Tensor x0v = random_tensor({1, w}, 21);
  std::vector<double> oracle_hist(w * 5);
  {
    // independent unrolled recursion on plain arrays
    std::vector<std::vector<double>> xs = {x0v.data};
    for (int l = 1; l <= 4; ++l) {
      std::vector<double> next(w, 0.0);  // H == 0
      for (const auto& xi : xs)
        for (std::size_t i = 0; i < w; ++i) next[i] += xi[i];
      for (std::size_t i = 0; i < w; ++i) next[i] /= static_cast<double>(l + 1);
      xs.push_back(next);
    }
    std::copy(xs.back().begin(), xs.back().end(), oracle_hist.begin());
  }
  auto x0 = g.input(x0v);
  std::vector<Graph::NodeId> ws, bs;
  for (int l = 0; l < 4; ++l) {
    ws.push_back(g.parameter(Tensor::zeros({w, w})));
    bs.push_back(g.parameter(Tensor::zeros({w})));
  }
  const Tensor& out = g.value(dense_average_block(g, x0, CombineRule::Average, ws, bs));
  for (std::size_t i = 0; i < w; ++i) {
    CHECK(out[i] == doctest::Approx(oracle_hist[i]));
    CHECK(out[i] == doctest::Approx(x0v[i] / 2.0));
  }
}

TEST_CASE("dense average block fixed point under identity transform") {
  const std::size_t w = 4;
  const double c = 0.7;
  Graph g;
  auto x0 = g.input(Tensor::full({1, w}, c));
  Tensor eye({w, w});
  for (std::size_t i = 0; i < w; ++i) eye[i * w + i] = 1.0;
  std::vector<Graph::NodeId> ws, bs;
  for (int l = 0; l < 4; ++l) {
    ws.push_back(g.parameter(eye));
    bs.push_back(g.parameter(Tensor::zeros({w})));
  }
  const Tensor& out = g.value(dense_average_block(g, x0, CombineRule::Average, ws, bs));
  for (std::size_t i = 0; i < w; ++i) CHECK(out[i] == doctest::Approx(c));
}

TEST_CASE("dense average block preserves shape with random parameters") {
  const std::size_t w = 8;
  Graph g;
  auto x0 = g.input(random_tensor({3, w}, 33));
  std::vector<Graph::NodeId> ws, bs;
  for (int l = 0; l < 4; ++l) {
    ws.push_back(g.parameter(random_tensor({w, w}, 100 + l)));
    bs.push_back(g.parameter(random_tensor({w}, 200 + l)));
  }
  auto out = dense_average_block(g, x0, CombineRule::Average, ws, bs);
  CHECK(g.value(out).shape == Shape{3, w});
}

TEST_CASE("se block scales zero to zero and shrinks magnitudes") {
  const std::size_t c = 8, hid = 2;
  Graph g;
  auto rw = g.parameter(random_tensor({c, hid}, 1));
  auto rb = g.parameter(random_tensor({hid}, 2));
  auto ew = g.parameter(random_tensor({hid, c}, 3));
  auto eb = g.parameter(random_tensor({c}, 4));

  auto zero_out = se_block(g, g.input(Tensor::zeros({1, 4, 1, c})), rw, rb, ew, eb);
  for (double v : g.value(zero_out).data) CHECK(v == 0.0);

  Tensor feats = random_tensor({1, 4, 1, c}, 5);
  auto out = se_block(g, g.input(feats), rw, rb, ew, eb);
  for (std::size_t i = 0; i < feats.size(); ++i) {
    if (feats[i] != 0.0) {
      CHECK(std::fabs(g.value(out)[i]) < std::fabs(feats[i]));
      // sign pattern preserved, weight strictly inside (0,1)
      CHECK(g.value(out)[i] * feats[i] > 0.0);
    }
  }
}

TEST_CASE("se hidden width follows the reduction ratio") {
  ModelSpec spec;
  spec.width = 128;
  spec.se_ratio = 16;
  CHECK(ForecastNet(spec).se_hidden_width() == 8);
  spec.width = 8;
  spec.se_ratio = 16;
  CHECK(ForecastNet(spec).se_hidden_width() == 1);
}

TEST_CASE("hidden depth with paper defaults is 22") {
  CHECK(hidden_depth(ModelSpec{}) == 22);
}

namespace {

BatchInputs tiny_inputs(std::size_t n, std::uint64_t seed) {
  BatchInputs in;
  in.ls = random_tensor({n, 48, 2, 1}, seed);
  in.temperature = random_tensor({n, 48}, seed + 1);
  in.calendar = Tensor({n, 19});
  for (std::size_t r = 0; r < n; ++r) {
    in.calendar[r * 19 + (r % 7)] = 1.0;
    in.calendar[r * 19 + 7 + (r % 12)] = 1.0;
  }
  return in;
}

ModelSpec tiny_spec(CombineRule rule = CombineRule::Average) {
  ModelSpec s;
  s.width = 8;
  s.block_count = 2;
  s.se_ratio = 4;
  s.seed = 77;
  s.combine_rule = rule;
  return s;
}

}  // namespace

TEST_CASE("forecast net produces one scalar per sample, deterministically") {
  ModelSpec spec = tiny_spec();
  ForecastNet net(spec);
  ParameterStore store;
  net.init_params(store, 0.2);
  BatchInputs in = tiny_inputs(3, 5);
  auto run = [&] {
    Graph g;
    return g.value(net.forward(g, in, store)).data;
  };
  auto a = run();
  CHECK(a.size() == 3);
  CHECK(a == run());
}

TEST_CASE("malformed bundle names the offending field") {
  ForecastNet net(tiny_spec());
  ParameterStore store;
  net.init_params(store, 0.2);
  BatchInputs in = tiny_inputs(2, 9);
  in.temperature = Tensor({2, 47});
  Graph g;
  CHECK_THROWS_WITH_AS(net.forward(g, in, store), doctest::Contains("temperature"),
                       ContractError);
}

TEST_CASE("plain chain baseline exposes identical parameter shapes") {
  ForecastNet danet(tiny_spec(CombineRule::Average));
  ForecastNet ann(tiny_spec(CombineRule::None));
  ParameterStore sd, sa;
  danet.init_params(sd, 0.2);
  ann.init_params(sa, 0.2);
  REQUIRE(sd.size() == sa.size());
  std::size_t total_d = 0, total_a = 0;
  for (std::size_t i = 0; i < sd.size(); ++i) {
    CHECK(sd.name(i) == sa.name(i));
    CHECK(sd.value(i).shape == sa.value(i).shape);
    total_d += sd.value(i).size();
    total_a += sa.value(i).size();
  }
  CHECK(total_d == total_a);
}

TEST_CASE("plain chain equals composed layers when combining is off") {
  const std::size_t w = 5;
  Graph g;
  Tensor x0v = random_tensor({1, w}, 51, 0.0, 1.0);  // nonnegative input
  auto x0 = g.input(x0v);
  std::vector<Graph::NodeId> ws, bs;
  for (int l = 0; l < 4; ++l) {
    ws.push_back(g.parameter(random_tensor({w, w}, 300 + l)));
    bs.push_back(g.parameter(random_tensor({w}, 400 + l)));
  }
  auto chained = dense_average_block(g, x0, CombineRule::None, ws, bs);
  // independent composition H4(H3(H2(H1(x0))))
  auto x = x0;
  for (int l = 0; l < 4; ++l) x = g.relu(g.add_bias(g.matmul(x, ws[l]), bs[l]));
  for (std::size_t i = 0; i < w; ++i)
    CHECK(g.value(chained)[i] == doctest::Approx(g.value(x)[i]));
}

TEST_CASE("whole-net gradients match finite differences") {
  ModelSpec spec = tiny_spec();
  spec.block_count = 1;
  ForecastNet net(spec);
  ParameterStore store;
  net.init_params(store, 0.3);
  BatchInputs in = tiny_inputs(2, 19);
  Tensor target = random_tensor({2, 1}, 23);

  std::vector<double> theta;
  for (std::size_t i = 0; i < store.size(); ++i)
    theta.insert(theta.end(), store.value(i).data.begin(), store.value(i).data.end());

  auto eval = [&](const std::vector<double>& t, std::vector<Graph::NodeId>* pids_out,
                  Graph* keep) {
    ParameterStore ps;
    std::size_t at = 0;
    for (std::size_t i = 0; i < store.size(); ++i) {
      Tensor v(store.value(i).shape);
      std::copy(t.begin() + at, t.begin() + at + v.size(), v.data.begin());
      at += v.size();
      ps.add(store.name(i), std::move(v));
    }
    Graph local;
    Graph& g = keep ? *keep : local;
    std::vector<Graph::NodeId> pids;
    auto pred = net.forward(g, in, ps, &pids);
    if (pids_out) *pids_out = pids;
    return g.value(g.mean_abs_err(pred, g.input(target)))[0];
  };

  Graph g;
  std::vector<Graph::NodeId> pids;
  eval(theta, &pids, &g);
  g.backward(static_cast<Graph::NodeId>(g.node_count() - 1));
  std::vector<double> auto_grad;
  for (auto p : pids)
    for (double v : g.grad(p).data) auto_grad.push_back(v);

  auto fd = danet::testing::finite_difference_grad(
      theta, [&](const std::vector<double>& t) { return eval(t, nullptr, nullptr); });
  CHECK(danet::testing::max_rel_error(auto_grad, fd) < 1e-4);
}

TEST_CASE("model spec document round trip") {
  ModelSpec s = tiny_spec();
  s.kernel_heights = {1, 2, 3, 4};
  ModelSpec r = ModelSpec::from_document(s.to_document());
  CHECK(r.combine_rule == s.combine_rule);
  CHECK(r.block_count == s.block_count);
  CHECK(r.width == s.width);
  CHECK(r.se_ratio == s.se_ratio);
  CHECK(r.kernel_heights == s.kernel_heights);
  CHECK(r.seed == s.seed);
}

TEST_CASE("gradient growth study: averaging keeps the input gradient tame") {
  GradientGrowthConfig cfg;
  cfg.width = 64;
  cfg.init_sd = 0.1;
  cfg.seed = 2024;
  std::vector<int> depths = {1, 5, 10, 20};
  auto avg = gradient_growth_study(CombineRule::Average, depths, cfg);
  auto add = gradient_growth_study(CombineRule::Additive, depths, cfg);

  // depth 1: identical stacks up to the averaging factor 1/2
  CHECK(add[0].input_grad_norm == doctest::Approx(2.0 * avg[0].input_grad_norm));

  for (std::size_t i = 1; i < add.size(); ++i)
    CHECK(add[i].input_grad_norm >= add[i - 1].input_grad_norm);
  CHECK(add.back().input_grad_norm / avg.back().input_grad_norm >= 10.0);
  CHECK(avg.back().input_grad_norm <= 100.0 * avg.front().input_grad_norm);

  auto cat = gradient_growth_study(CombineRule::Concat, depths, cfg);
  CHECK(cat.back().param_count > add.back().param_count);
}

TEST_CASE("gradient growth study rejects bad depth lists") {
  GradientGrowthConfig cfg;
  CHECK_THROWS_AS(gradient_growth_study(CombineRule::Average, {0}, cfg), ContractError);
  CHECK_THROWS_AS(gradient_growth_study(CombineRule::Average, {3, 2}, cfg), ContractError);
}
