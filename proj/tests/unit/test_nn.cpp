#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "gradcheck.hpp"
#include "vcgan/error.hpp"
#include "vcgan/nn/adam.hpp"
#include "vcgan/nn/ops.hpp"

using namespace vcgan;
using nn::Shape;
using nn::Tensor;
using nn::Var;

namespace {

Tensor<double> random_tensor(Shape s, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Tensor<double> t(s);
  for (auto& v : t.data) v = d(rng);
  return t;
}

// Scalar readout sum(out * r) for a fixed random r, so every output element
// contributes to the checked gradient.
Var<double> readout(const Var<double>& out, const Tensor<double>& r) {
  const Shape s = out.shape();
  Tensor<double> w(Shape{1, s.c, s.h, s.w}, r.data);
  std::vector<Var<double>> per_sample;
  const Var<double> y = nn::linear(out, Var<double>(w), Var<double>());
  for (int n = 0; n < s.n; ++n) per_sample.push_back(nn::select_sample(y, n));
  return nn::scale(nn::mean_of(per_sample), static_cast<double>(s.n));
}

using OpFn = std::function<Var<double>(const std::vector<Var<double>>&)>;

// Max relative error between tape gradients and central differences over
// every input element. The five-point stencil keeps both truncation and
// roundoff near 1e-12, which matters for instance norm where input gradients
// cancel down to ~1e-5.
double op_grad_error(const OpFn& op, const std::vector<Tensor<double>>& inputs, std::uint64_t seed = 3) {
  std::vector<Var<double>> leaves;
  for (const auto& t : inputs) leaves.emplace_back(t, true);
  const Var<double> probe_out = op(leaves);
  std::mt19937_64 rng(seed);
  const Tensor<double> r = random_tensor(Shape{1, probe_out.shape().c, probe_out.shape().h, probe_out.shape().w}, rng);
  nn::backward(readout(probe_out, r));

  auto eval = [&](const std::vector<Tensor<double>>& xs) {
    std::vector<Var<double>> vs;
    for (const auto& t : xs) vs.emplace_back(t, false);
    return readout(op(vs), r).value().data[0];
  };
  double worst = 0.0;
  const double h = 1e-3;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].numel(); ++i) {
      auto at = [&](double d) {
        auto xs = inputs;
        xs[k].data[i] += d;
        return eval(xs);
      };
      const double numeric = (8 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12 * h);
      const double analytic = leaves[k].grad().empty() ? 0.0 : leaves[k].grad().data[i];
      worst = std::max(worst, vctest::rel_error(analytic, numeric, 1e-4));
    }
  }
  return worst;
}

// Direct convolution, the textbook sum.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* b,
                          nn::ConvGeometry g) {
  const Shape xs = x.shape, ws = w.shape;
  const int oh = (xs.h + 2 * g.pad_h - ws.h) / g.stride_h + 1;
  const int ow = (xs.w + 2 * g.pad_w - ws.w) / g.stride_w + 1;
  Tensor<double> y(Shape{xs.n, ws.n, oh, ow});
  for (int n = 0; n < xs.n; ++n)
    for (int co = 0; co < ws.n; ++co)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          double acc = b ? b->data[co] : 0.0;
          for (int ci = 0; ci < xs.c; ++ci)
            for (int u = 0; u < ws.h; ++u)
              for (int v = 0; v < ws.w; ++v) {
                const int hi = i * g.stride_h - g.pad_h + u, wi = j * g.stride_w - g.pad_w + v;
                if (hi < 0 || hi >= xs.h || wi < 0 || wi >= xs.w) continue;
                acc += x.at(n, ci, hi, wi) * w.at(co, ci, u, v);
              }
          y.at(n, co, i, j) = acc;
        }
  return y;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a.data[i] * b.data[i];
  return s;
}

}  // namespace

TEST_CASE("conv2d matches the direct sum") {
  std::mt19937_64 rng(1);
  for (const auto g : {nn::ConvGeometry{1, 1, 1, 1}, nn::ConvGeometry{2, 2, 1, 1}, nn::ConvGeometry{2, 1, 0, 1}}) {
    const auto x = random_tensor(Shape{2, 3, 9, 7}, rng);
    const auto w = random_tensor(Shape{4, 3, 3, 3}, rng);
    const auto b = random_tensor(Shape{1, 4, 1, 1}, rng);
    const auto got = nn::conv2d(Var<double>(x), Var<double>(w), Var<double>(b), g).value();
    const auto want = naive_conv(x, w, &b, g);
    REQUIRE(got.shape == want.shape);
    for (std::size_t i = 0; i < got.numel(); ++i) CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv_transpose2d is the adjoint of conv2d") {
  std::mt19937_64 rng(2);
  const nn::ConvGeometry g{2, 2, 1, 1};
  // 4-tap, stride 2, pad 1: 8 -> 4 forward, 4 -> 8 transposed.
  const auto x = random_tensor(Shape{1, 3, 8, 8}, rng);
  const auto w = random_tensor(Shape{5, 3, 4, 4}, rng);
  const auto y = random_tensor(Shape{1, 5, 4, 4}, rng);
  const auto cx = nn::conv2d(Var<double>(x), Var<double>(w), Var<double>(), g).value();
  const auto ty = nn::conv_transpose2d(Var<double>(y), Var<double>(w), Var<double>(), g).value();
  REQUIRE(cx.shape == y.shape);
  REQUIRE(ty.shape == x.shape);
  CHECK(dot(cx, y) == doctest::Approx(dot(x, ty)).epsilon(1e-12));
}

TEST_CASE("pixel_shuffle moves channel groups into space") {
  Tensor<double> x(Shape{1, 8, 2, 3});
  for (std::size_t i = 0; i < x.numel(); ++i) x.data[i] = static_cast<double>(i);
  const auto y = nn::pixel_shuffle(Var<double>(x), 2, 2).value();
  REQUIRE(y.shape == Shape{1, 2, 4, 6});
  for (int c = 0; c < 2; ++c)
    for (int h = 0; h < 4; ++h)
      for (int w = 0; w < 6; ++w) CHECK(y.at(0, c, h, w) == x.at(0, c * 4 + (h % 2) * 2 + (w % 2), h / 2, w / 2));
}

TEST_CASE("instance_norm output has zero mean and unit variance per channel") {
  std::mt19937_64 rng(4);
  const auto x = random_tensor(Shape{2, 3, 5, 6}, rng, 3.0);
  const Tensor<double> gamma(Shape{1, 3, 1, 1}, 1.0), beta(Shape{1, 3, 1, 1}, 0.0);
  const auto y = nn::instance_norm(Var<double>(x), Var<double>(gamma), Var<double>(beta), 0.0).value();
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c) {
      double m = 0, v = 0;
      for (int h = 0; h < 5; ++h)
        for (int w = 0; w < 6; ++w) m += y.at(n, c, h, w);
      m /= 30;
      for (int h = 0; h < 5; ++h)
        for (int w = 0; w < 6; ++w) v += (y.at(n, c, h, w) - m) * (y.at(n, c, h, w) - m);
      CHECK(m == doctest::Approx(0.0).epsilon(1e-12));
      CHECK(v / 30 == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("op gradients agree with central differences") {
  std::mt19937_64 rng(5);
  const double tol = 1e-6;
  SUBCASE("conv2d") {
    auto op = [](const std::vector<Var<double>>& v) { return nn::conv2d(v[0], v[1], v[2], {2, 1, 1, 1}); };
    CHECK(op_grad_error(op, {random_tensor({2, 2, 6, 5}, rng), random_tensor({3, 2, 3, 3}, rng),
                             random_tensor({1, 3, 1, 1}, rng)}) < tol);
  }
  SUBCASE("conv_transpose2d") {
    auto op = [](const std::vector<Var<double>>& v) { return nn::conv_transpose2d(v[0], v[1], v[2], {2, 2, 1, 1}); };
    CHECK(op_grad_error(op, {random_tensor({2, 3, 3, 4}, rng), random_tensor({3, 2, 4, 4}, rng),
                             random_tensor({1, 2, 1, 1}, rng)}) < tol);
  }
  SUBCASE("instance_norm") {
    auto op = [](const std::vector<Var<double>>& v) { return nn::instance_norm(v[0], v[1], v[2]); };
    CHECK(op_grad_error(op, {random_tensor({2, 3, 4, 5}, rng), random_tensor({1, 3, 1, 1}, rng),
                             random_tensor({1, 3, 1, 1}, rng)}) < tol);
  }
  SUBCASE("glu, tanh, sigmoid, leaky_relu") {
    auto op = [](const std::vector<Var<double>>& v) {
      return nn::leaky_relu(nn::add(nn::tanh(nn::glu(v[0])), nn::sigmoid(nn::glu(v[0]))), 0.2);
    };
    CHECK(op_grad_error(op, {random_tensor({2, 4, 3, 3}, rng)}) < tol);
  }
  SUBCASE("pixel_shuffle, concat, tile and pooling") {
    auto op = [](const std::vector<Var<double>>& v) {
      const auto up = nn::pixel_shuffle(v[0], 2, 1);                  // [2,2,6,3]
      const auto summary = nn::tile_time(nn::mean_time(v[1]), 3);     // [2,1,6,3]
      return nn::concat_channels(up, nn::scale(summary, 0.5));
    };
    CHECK(op_grad_error(op, {random_tensor({2, 4, 3, 3}, rng), random_tensor({2, 1, 6, 4}, rng)}) < tol);
  }
  SUBCASE("gather_time, concat_batch, select_sample") {
    auto op = [](const std::vector<Var<double>>& v) {
      const std::vector<int> idx{2, 1, 0, 1, 2, 3, 3};
      const auto g = nn::gather_time(v[0], idx);
      return nn::concat_batch(std::vector<Var<double>>{nn::select_sample(g, 1), nn::select_sample(g, 0), nn::select_sample(g, 1)});
    };
    CHECK(op_grad_error(op, {random_tensor({2, 2, 3, 4}, rng)}) < tol);
  }
  SUBCASE("linear and nll_from_logits") {
    auto op = [](const std::vector<Var<double>>& v) {
      const std::vector<int> labels{1, 4, 0};
      return nn::nll_from_logits(nn::linear(v[0], v[1], v[2]), labels, 1e-12);
    };
    CHECK(op_grad_error(op, {random_tensor({3, 2, 2, 2}, rng), random_tensor({5, 2, 2, 2}, rng),
                             random_tensor({1, 5, 1, 1}, rng)}) < tol);
  }
  SUBCASE("l1_mean away from ties") {
    auto op = [](const std::vector<Var<double>>& v) { return nn::l1_mean(v[0], v[1]); };
    const auto a = random_tensor({2, 1, 3, 3}, rng);
    auto b = a;
    for (std::size_t i = 0; i < b.numel(); ++i) b.data[i] += (i % 2 ? 0.3 : -0.3);
    CHECK(op_grad_error(op, {a, b}) < tol);
  }
}

TEST_CASE("nll_from_logits floors tiny probabilities") {
  // Logit gap of 200 gives p(label) ~ e^-200, far below the floor.
  const Tensor<double> logits(Shape{1, 2, 1, 1}, std::vector<double>{200.0, 0.0});
  const std::vector<int> label{1};
  const auto loss = nn::nll_from_logits(Var<double>(logits), label, 1e-12).value().data[0];
  CHECK(loss == doctest::Approx(-std::log(1e-12)).epsilon(1e-12));
}

TEST_CASE("shape mismatches throw") {
  const Tensor<double> a(Shape{1, 1, 2, 2}), b(Shape{1, 1, 2, 3});
  CHECK_THROWS_AS(nn::l1_mean(Var<double>(a), Var<double>(b)), Error);
  CHECK_THROWS_AS(nn::pixel_shuffle(Var<double>(Tensor<double>(Shape{1, 3, 2, 2})), 2, 1), Error);
  CHECK_THROWS_AS(Tensor<double>(Shape{1, 1, 2, 2}, std::vector<double>{1.0}), Error);
}

TEST_CASE("adam takes a bias-corrected first step of size lr") {
  nn::ParamStore<double> store;
  store.add("w", Shape{1, 1, 1, 3}).data = {1.0, -2.0, 0.5};
  nn::AdamState<double> state;
  std::map<std::string, Tensor<double>> grads{{"w", Tensor<double>(Shape{1, 1, 1, 3}, std::vector<double>{0.3, -7.0, 1e-3})}};
  nn::adam_step(store, state, grads, nn::AdamConfig{0.01, 0.5, 0.999, 1e-12});
  // m_hat = g, v_hat = g^2, so the update is lr * sign(g) up to eps.
  CHECK(store.at("w").data[0] == doctest::Approx(0.99).epsilon(1e-9));
  CHECK(store.at("w").data[1] == doctest::Approx(-1.99).epsilon(1e-9));
  CHECK(store.at("w").data[2] == doctest::Approx(0.49).epsilon(1e-6));
  CHECK(state.step == 1);
}

TEST_CASE("checksum changes with any parameter bit") {
  nn::ParamStore<float> a;
  a.add("x", Shape{1, 1, 2, 2}).data = {1, 2, 3, 4};
  auto b = a;
  CHECK(nn::checksum(a) == nn::checksum(b));
  b.at("x").data[3] = std::nextafter(4.0f, 5.0f);
  CHECK(nn::checksum(a) != nn::checksum(b));
}
