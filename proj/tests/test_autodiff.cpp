#include <cmath>
#include <random>

#include "danet/graph.hpp"
#include "danet/optim.hpp"
#include "doctest.h"
#include "fd_check.hpp"

using namespace danet;
using danet::testing::finite_difference_grad;
using danet::testing::max_rel_error;

TEST_CASE("elementwise add") {
  Graph g;
  auto a = g.input(Tensor::vector({1, 2}));
  auto b = g.input(Tensor::vector({3, 4}));
  auto c = g.add(a, b);
  CHECK(g.value(c)[0] == 4);
  CHECK(g.value(c)[1] == 6);
}

TEST_CASE("matmul identity leaves matrix unchanged") {
  Graph g;
  Tensor eye({3, 3});
  for (int i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0;
  Tensor a({3, 3}, {2, -1, 0.5, 3, 7, -2, 0, 1, 4});
  auto c = g.matmul(g.input(eye), g.input(a));
  for (std::size_t i = 0; i < 9; ++i) CHECK(g.value(c)[i] == doctest::Approx(a[i]));
}

TEST_CASE("relu clamps negatives") {
  Graph g;
  auto y = g.relu(g.input(Tensor::vector({-1, 0, 2})));
  CHECK(g.value(y)[0] == 0);
  CHECK(g.value(y)[1] == 0);
  CHECK(g.value(y)[2] == 2);
}

TEST_CASE("relu nonnegative, sigmoid in (0,1) on random inputs") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uni(-10, 10);
  Tensor x({100});
  for (double& v : x.data) v = uni(rng);
  Graph g;
  auto xi = g.input(x);
  const Tensor& r = g.value(g.relu(xi));
  const Tensor& s = g.value(g.sigmoid(xi));
  for (std::size_t i = 0; i < 100; ++i) {
    CHECK(r[i] >= 0.0);
    CHECK(s[i] > 0.0);
    CHECK(s[i] < 1.0);
  }
}

TEST_CASE("forward is deterministic") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> uni(-1, 1);
  Tensor x({4, 5});
  for (double& v : x.data) v = uni(rng);
  Tensor w({5, 3});
  for (double& v : w.data) v = uni(rng);
  auto run = [&] {
    Graph g;
    return g.value(g.sigmoid(g.matmul(g.input(x), g.input(w)))).data;
  };
  CHECK(run() == run());
}

TEST_CASE("shape mismatch names both shapes") {
  Graph g;
  auto a = g.input(Tensor({2, 3}));
  auto b = g.input(Tensor({3, 3}));
  CHECK_THROWS_WITH_AS(g.add(a, b), doctest::Contains("[2x3]"), ShapeError);
}

TEST_CASE("non-finite input rejected") {
  Graph g;
  Tensor bad({2});
  bad[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(g.input(bad), NumericError);
}

TEST_CASE("backward of linear loss gives the fixed factor") {
  // loss = sum(w .* x) with x fixed -> dloss/dw = x
  Graph g;
  Tensor x = Tensor::vector({2, -3, 0.5});
  auto w = g.parameter(Tensor::vector({1, 1, 1}));
  auto loss = g.sum(g.mul(w, g.input(x)));
  g.backward(loss);
  for (std::size_t i = 0; i < 3; ++i) CHECK(g.grad(w)[i] == doctest::Approx(x[i]));
}

TEST_CASE("sigmoid gradient at zero is 0.25") {
  Graph g;
  auto x = g.parameter(Tensor::vector({0.0}));
  g.backward(g.sum(g.sigmoid(x)));
  CHECK(g.grad(x)[0] == doctest::Approx(0.25));
}

TEST_CASE("backward requires scalar loss") {
  Graph g;
  auto x = g.input(Tensor::vector({1, 2}));
  CHECK_THROWS_AS(g.backward(g.relu(x)), ContractError);
}

TEST_CASE("unreachable parameter keeps zero gradient") {
  Graph g;
  auto used = g.parameter(Tensor::vector({1.0}));
  auto unused = g.parameter(Tensor::vector({5.0}));
  g.backward(g.sum(used));
  CHECK(g.grad(unused)[0] == 0.0);
}

TEST_CASE("random 3-layer net matches finite differences") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> uni(-1, 1);
  const std::size_t in = 6, hid = 5, out = 3;
  std::vector<double> theta(in * hid + hid + hid * hid + hid + hid * out + out);
  for (double& v : theta) v = uni(rng);
  Tensor x({1, in});
  for (double& v : x.data) v = uni(rng);

  auto unpack = [&](const std::vector<double>& t, Graph& g, std::vector<Graph::NodeId>& ps) {
    std::size_t at = 0;
    auto take = [&](Shape s) {
      Tensor v(s);
      std::copy(t.begin() + at, t.begin() + at + v.size(), v.data.begin());
      at += v.size();
      ps.push_back(g.parameter(std::move(v)));
      return ps.back();
    };
    auto w1 = take({in, hid}), b1 = take({hid});
    auto w2 = take({hid, hid}), b2 = take({hid});
    auto w3 = take({hid, out}), b3 = take({out});
    auto h1 = g.sigmoid(g.add_bias(g.matmul(g.input(x), w1), b1));
    auto h2 = g.relu(g.add_bias(g.matmul(h1, w2), b2));
    auto y = g.add_bias(g.matmul(h2, w3), b3);
    return g.mean_abs_err(y, g.input(Tensor::full({1, out}, 0.3)));
  };

  Graph g;
  std::vector<Graph::NodeId> ps;
  auto loss = unpack(theta, g, ps);
  g.backward(loss);
  std::vector<double> auto_grad;
  for (auto p : ps)
    for (double v : g.grad(p).data) auto_grad.push_back(v);

  auto fd = finite_difference_grad(theta, [&](const std::vector<double>& t) {
    Graph gg;
    std::vector<Graph::NodeId> pp;
    return gg.value(unpack(t, gg, pp))[0];
  });
  CHECK(max_rel_error(auto_grad, fd) < 1e-4);
}

TEST_CASE("conv2d valid output shape") {
  Graph g;
  auto x = g.input(Tensor({48, 2, 1}));
  auto k = g.input(Tensor({4, 2, 1, 3}));
  const Tensor& y = g.value(g.conv2d_valid(x, k));
  CHECK(y.shape == Shape{45, 1, 3});
}

TEST_CASE("conv2d all ones sums the window") {
  Graph g;
  auto y = g.conv2d_valid(g.input(Tensor::full({2, 2, 1}, 1.0)),
                          g.input(Tensor::full({2, 2, 1, 1}, 1.0)));
  CHECK(g.value(y).size() == 1);
  CHECK(g.value(y)[0] == doctest::Approx(4.0));
}

TEST_CASE("conv2d matches nested-loop oracle") {
  std::mt19937_64 rng(97);
  std::uniform_real_distribution<double> uni(-1, 1);
  Tensor x({5, 2, 2});
  Tensor k({3, 2, 2, 4});
  for (double& v : x.data) v = uni(rng);
  for (double& v : k.data) v = uni(rng);

  Graph g;
  const Tensor& y = g.value(g.conv2d_valid(g.input(x), g.input(k)));
  // independent brute-force cross-correlation
  for (std::size_t oy = 0; oy < 3; ++oy)
    for (std::size_t oc = 0; oc < 4; ++oc) {
      double acc = 0;
      for (std::size_t fy = 0; fy < 3; ++fy)
        for (std::size_t fz = 0; fz < 2; ++fz)
          for (std::size_t c = 0; c < 2; ++c)
            acc += x[((oy + fy) * 2 + fz) * 2 + c] * k[((fy * 2 + fz) * 2 + c) * 4 + oc];
      CHECK(std::fabs(y[oy * 4 + oc] - acc) < 1e-12);
    }
}

TEST_CASE("conv2d kernel larger than input is a shape error") {
  Graph g;
  auto x = g.input(Tensor({3, 2, 1}));
  auto k = g.input(Tensor({4, 2, 1, 1}));
  CHECK_THROWS_AS(g.conv2d_valid(x, k), ShapeError);
}

TEST_CASE("conv2d gradients match finite differences") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> uni(-1, 1);
  std::vector<double> theta(4 * 2 * 1 * 2);  // kernel entries
  for (double& v : theta) v = uni(rng);
  Tensor x({6, 2, 1});
  for (double& v : x.data) v = uni(rng);

  auto eval = [&](const std::vector<double>& t, Graph& g, Graph::NodeId* kp) {
    Tensor k({4, 2, 1, 2}, t);
    auto kn = g.parameter(std::move(k));
    if (kp) *kp = kn;
    return g.mean(g.conv2d_valid(g.input(x), kn));
  };
  Graph g;
  Graph::NodeId kn;
  auto loss = eval(theta, g, &kn);
  g.backward(loss);
  auto fd = finite_difference_grad(theta, [&](const std::vector<double>& t) {
    Graph gg;
    return gg.value(eval(t, gg, nullptr))[0];
  });
  CHECK(max_rel_error(g.grad(kn).data, fd) < 1e-4);
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  ParameterStore store;
  store.add("w", Tensor::vector({1.5, -2.0}));
  store.adam_step({Tensor::zeros({2})}, 0.001);
  CHECK(store.value("w")[0] == 1.5);
  CHECK(store.value("w")[1] == -2.0);
  CHECK(store.step() == 1);
}

TEST_CASE("adam first step moves by about the rate") {
  // closed form at t=1: bias-corrected update is rate * g / (|g| + eps-ish)
  ParameterStore store;
  store.add("w", Tensor::vector({0.0}));
  store.adam_step({Tensor::vector({1.0})}, 0.001);
  CHECK(store.value("w")[0] == doctest::Approx(-0.001).epsilon(1e-4));
}

TEST_CASE("adam rejects misaligned gradients") {
  ParameterStore store;
  store.add("w", Tensor::vector({0.0}));
  CHECK_THROWS_AS(store.adam_step({}, 0.001), ContractError);
  CHECK_THROWS_AS(store.adam_step({Tensor::zeros({2})}, 0.001), ContractError);
}

TEST_CASE("stepped learning-rate schedule") {
  LrSchedule s;  // paper constants
  CHECK(s.rate(0) == doctest::Approx(1e-3));
  CHECK(s.rate(599) == doctest::Approx(1e-3));
  CHECK(s.rate(600) == doctest::Approx(1e-4));
  CHECK(s.rate(1199) == doctest::Approx(1e-4));
  for (int e = 0; e < 1199; ++e) CHECK(s.rate(e + 1) <= s.rate(e));
}

TEST_CASE("truncated normal stays inside two sigma and is reproducible") {
  Tensor a = truncated_normal({1000}, 0.0, 0.5, 42);
  Tensor b = truncated_normal({1000}, 0.0, 0.5, 42);
  CHECK(a.data == b.data);
  for (double v : a.data) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  CHECK_THROWS_AS(truncated_normal({4}, 0.0, -1.0, 1), ContractError);
}

TEST_CASE("truncated normal empirical sd near the 2-sigma truncated value") {
  Tensor big = truncated_normal({1000000}, 0.0, 1.0, 9001);
  double mean = 0;
  for (double v : big.data) mean += v;
  mean /= static_cast<double>(big.size());
  double var = 0;
  for (double v : big.data) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(big.size()));
  CHECK(sd > 0.86);
  CHECK(sd < 0.91);
}
