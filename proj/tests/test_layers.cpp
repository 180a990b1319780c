// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <functional>

#include "doctest.h"
#include "gradcheck.hpp"
#include "gridcast/error.hpp"
#include "gridcast/layers.hpp"

using namespace gridcast;
using gridcast::testing::max_relative_error;
using gridcast::testing::numeric_gradient;
using gridcast::testing::random_tensor;
using gridcast::testing::weighted_sum;

namespace {

constexpr double kGradTolerance = 1e-4;

// Checks input and every parameter gradient of `layer` against central
// differences of sum(upstream * forward(x)). Returns the worst relative error.
template <typename Layer>
double gradient_check(Layer& layer, Tensor x, Rng& rng) {
  typename Layer::Cache cache;
  const Tensor y = layer.forward(x, &cache);
  const Tensor upstream = random_tensor(y.shape(), rng);
  const LayerGrads analytic = layer.backward(cache, upstream);
  auto loss = [&] { return weighted_sum(layer.forward(x), upstream); };

  double worst = max_relative_error(analytic.input, numeric_gradient(x, loss));
  const auto params = layer.parameters();
  REQUIRE(params.size() == analytic.params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    REQUIRE(params[i]->shape() == analytic.params[i].shape());
    worst = std::max(worst, max_relative_error(analytic.params[i], numeric_gradient(*params[i], loss)));
  }
  return worst;
}

Tensor randomize_bias(Tensor t, Rng& rng) {
  for (auto& v : t.values()) v = rng.uniform(-0.5, 0.5);
  return t;
}

// Naive zero-padded sliding window, written independently of conv1d_apply.
Tensor naive_conv(const Tensor& kernels, const Tensor& bias, const Tensor& x) {
  const std::size_t out = kernels.extent(0), in = kernels.extent(1), k = kernels.extent(2);
  const long steps = static_cast<long>(x.rows());
  const long half = static_cast<long>(k / 2);
  Tensor y({x.rows(), out});
  for (long t = 0; t < steps; ++t)
    for (std::size_t o = 0; o < out; ++o) {
      double acc = bias[o];
      for (long j = -half; j <= half; ++j) {
        const long s = t + j;
        const double* xrow = (s >= 0 && s < steps) ? x.row(static_cast<std::size_t>(s)).data() : nullptr;
        for (std::size_t i = 0; i < in; ++i)
          acc += kernels(o, i, static_cast<std::size_t>(j + half)) * (xrow ? xrow[i] : 0.0);
      }
      y(static_cast<std::size_t>(t), o) = acc;
    }
  return y;
}

}  // namespace

// ---------------------------------------------------------------- conv1d

TEST_CASE("conv1d examples") {
  const Tensor x = Tensor::matrix({{1}, {2}, {3}});
  Conv1dParams identity{Tensor({1, 1, 1}, {1.0}), Tensor({1})};
  CHECK(conv1d_apply(identity, x) == x);

  Conv1dParams zero{Tensor({1, 1, 3}), Tensor::vector({2.5})};
  CHECK(conv1d_apply(zero, x) == Tensor::matrix({{2.5}, {2.5}, {2.5}}));

  Conv1dParams ones{Tensor({1, 1, 3}, 1.0), Tensor({1})};
  CHECK(conv1d_apply(ones, x) == Tensor::matrix({{3}, {6}, {5}}));
  CHECK(naive_conv(ones.kernels, ones.bias, x) == Tensor::matrix({{3}, {6}, {5}}));
}

TEST_CASE("conv1d matches the naive oracle and preserves length") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = 1 + 2 * rng.below(3), in = 1 + rng.below(4), out = 1 + rng.below(4);
    const std::size_t steps = 1 + rng.below(9);
    Conv1dParams p{random_tensor({out, in, k}, rng), random_tensor({out}, rng)};
    const Tensor x = random_tensor({steps, in}, rng);
    const Tensor y = conv1d_apply(p, x);
    CHECK(y.rows() == steps);
    CHECK(max_relative_error(y, naive_conv(p.kernels, p.bias, x), 1.0) < 1e-13);
  }
}

TEST_CASE("conv1d errors") {
  Conv1dParams p{Tensor({1, 2, 3}), Tensor({1})};
  CHECK_THROWS_AS(conv1d_apply(p, Tensor({4, 3})), DimensionError);
  Conv1dParams even{Tensor({1, 1, 2}), Tensor({1})};
  CHECK_THROWS_AS(conv1d_apply(even, Tensor({4, 1})), ParameterError);
}

// ---------------------------------------------------------------- gru

namespace {

GruParams zero_gru(std::size_t in, std::size_t hidden) {
  return GruParams{Tensor({in, hidden}),     Tensor({in, hidden}),     Tensor({in, hidden}),
                   Tensor({hidden, hidden}), Tensor({hidden, hidden}), Tensor({hidden, hidden}),
                   Tensor({hidden}),         Tensor({hidden}),         Tensor({hidden})};
}

}  // namespace

TEST_CASE("gru zero-weight cases") {
  const GruParams p = zero_gru(2, 3);
  const Tensor x = Tensor::matrix({{1, -2}, {0.5, 4}, {3, 3}});
  CHECK(gru_apply(p, x, Tensor({3})) == Tensor({3, 3}));

  const Tensor h0 = Tensor::vector({1.0, -2.0, 8.0});
  const Tensor h = gru_apply(p, x, h0);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t j = 0; j < 3; ++j) CHECK(h(t, j) == h0[j] * std::pow(0.5, static_cast<double>(t + 1)));
}

TEST_CASE("gru scalar hand evaluation") {
  GruParams p = zero_gru(1, 1);
  p.w_candidate[0] = 1.0;
  const Tensor h = gru_apply(p, Tensor::matrix({{1.0}}), Tensor({1}));
  CHECK(h[0] == doctest::Approx(0.5 * std::tanh(1.0)).epsilon(1e-15));
  CHECK(h[0] == doctest::Approx(0.380797).epsilon(1e-6));
}

TEST_CASE("gru outputs stay bounded") {
  Rng rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t in = 1 + rng.below(4), hidden = 1 + rng.below(4), steps = 1 + rng.below(12);
    Gru gru = Gru::init(in, hidden, rng);
    for (Tensor* t : gru.parameters())
      for (auto& v : t->values()) v = rng.uniform(-3.0, 3.0);
    const Tensor h0 = random_tensor({hidden}, rng, 2.5);
    const Tensor h = gru_apply(gru.params, random_tensor({steps, in}, rng, 5.0), h0);
    for (std::size_t t = 0; t < steps; ++t)
      for (std::size_t j = 0; j < hidden; ++j) CHECK(std::abs(h(t, j)) <= std::max(std::abs(h0[j]), 1.0) + 1e-15);
  }
}

TEST_CASE("gru width mismatch") {
  Rng rng(1);
  const Gru gru = Gru::init(3, 2, rng);
  CHECK_THROWS_AS(gru.forward(Tensor({4, 2})), DimensionError);
}

// ---------------------------------------------------------------- attention

TEST_CASE("attention examples") {
  AttentionParams p{Tensor::matrix({{1.0}}), Tensor::matrix({{1.0}})};
  const Tensor single = Tensor::matrix({{0.7}});
  CHECK(attention_apply(p, single) == single);
  CHECK(attention_weights(p, single)[0] == 1.0);

  Rng rng(4);
  AttentionParams q{random_tensor({3, 2}, rng), random_tensor({3, 2}, rng)};
  const Tensor same = Tensor::matrix({{1, 2, 3}, {1, 2, 3}, {1, 2, 3}, {1, 2, 3}});
  const Tensor w = attention_weights(q, same);
  for (double v : w.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  const Tensor out = attention_apply(q, same);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t j = 0; j < 3; ++j) CHECK(out(t, j) == doctest::Approx(same(t, j)).epsilon(1e-15));
}

TEST_CASE("attention scalar hand evaluation") {
  AttentionParams p{Tensor::matrix({{1.0}}), Tensor::matrix({{1.0}})};
  const double l3 = std::log(3.0);
  const Tensor out = attention_apply(p, Tensor::matrix({{0.0}, {l3}}));
  // Row 1: query 0 scores both keys 0, so the weights are uniform.
  CHECK(out[0] == doctest::Approx(0.5 * l3).epsilon(1e-15));
  // Row 2: scores [0, ln(3)^2].
  const double e = std::exp(l3 * l3);
  CHECK(out[1] == doctest::Approx(e / (1.0 + e) * l3).epsilon(1e-14));
}

TEST_CASE("attention rows sum to one") {
  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t d = 1 + rng.below(5), a = 1 + rng.below(5), steps = 1 + rng.below(10);
    AttentionParams p{random_tensor({d, a}, rng, 2.0), random_tensor({d, a}, rng, 2.0)};
    const Tensor w = attention_weights(p, random_tensor({steps, d}, rng, 3.0));
    for (std::size_t t = 0; t < steps; ++t) {
      double s = 0;
      for (double v : w.row(t)) s += v;
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("attention projections must agree") {
  CHECK_THROWS_AS(Attention(AttentionParams{Tensor({2, 3}), Tensor({2, 2})}), DimensionError);
}

// ---------------------------------------------------------------- dense

TEST_CASE("dense examples") {
  const Tensor x = Tensor::matrix({{0.2, 0.3}, {-1.0, 4.0}});
  CHECK(dense_apply(DenseParams{Tensor::identity(2), Tensor({2}), Activation::identity}, x) == x);
  CHECK(dense_apply(DenseParams{Tensor({2, 2}), Tensor::vector({1.5, -2}), Activation::identity}, x) ==
        Tensor::matrix({{1.5, -2}, {1.5, -2}}));
  const Tensor r = dense_apply(DenseParams{Tensor::matrix({{1}, {1}}), Tensor::vector({-1}), Activation::relu},
                               Tensor::matrix({{0.2, 0.3}}));
  CHECK(r == Tensor::matrix({{0.0}}));
  CHECK_THROWS_AS(dense_apply(DenseParams{Tensor({3, 1}), Tensor({1}), Activation::relu}, x), DimensionError);
}

TEST_CASE("dense identity backward passes upstream through") {
  Dense dense(DenseParams{Tensor::identity(3), Tensor({3}), Activation::identity});
  Dense::Cache cache;
  Rng rng(2);
  dense.forward(random_tensor({4, 3}, rng), &cache);
  const Tensor up = random_tensor({4, 3}, rng);
  CHECK(dense.backward(cache, up).input == up);
}

// ---------------------------------------------------------------- dropout

TEST_CASE("dropout examples") {
  Rng rng(5);
  const Tensor x = random_tensor({4, 4}, rng);
  CHECK(dropout_apply(x, 0.0, true, rng) == x);
  CHECK(dropout_apply(x, 0.7, false, rng) == x);
  CHECK_THROWS_AS(dropout_apply(x, 1.0, true, rng), ParameterError);
  CHECK_THROWS_AS(dropout_apply(x, -0.1, true, rng), ParameterError);
}

TEST_CASE("dropout statistics and determinism") {
  const Tensor ones({10000}, 1.0);
  Rng a(77), b(77);
  const Tensor da = dropout_apply(ones, 0.5, true, a);
  const Tensor db = dropout_apply(ones, 0.5, true, b);
  CHECK(da == db);
  std::size_t zeros = 0;
  for (double v : da.values()) zeros += v == 0.0;
  CHECK(std::abs(sum(da) / 10000.0 - 1.0) < 0.05);
  CHECK(std::abs(static_cast<double>(zeros) / 10000.0 - 0.5) < 0.02);
  for (double v : da.values()) CHECK((v == 0.0 || v == 2.0));
}

// ---------------------------------------------------------------- layernorm

TEST_CASE("layernorm examples") {
  const auto unit = LayerNorm::init(3).params;
  const Tensor c = layernorm_apply(unit, Tensor::matrix({{4, 4, 4}}));
  for (double v : c.values()) CHECK(v == 0.0);

  const Tensor pair = layernorm_apply(LayerNorm::init(2).params, Tensor::matrix({{-1, 1}}));
  CHECK(pair[0] == doctest::Approx(-1.0 / std::sqrt(1.0 + 1e-5)).epsilon(1e-15));
  CHECK(pair[1] == doctest::Approx(1.0 / std::sqrt(1.0 + 1e-5)).epsilon(1e-15));

  LayerNormParams annihilate{Tensor({3}), Tensor({3}, 0.25), 1e-5};
  const Tensor flat = layernorm_apply(annihilate, Tensor::matrix({{1, -5, 9}}));
  for (double v : flat.values()) CHECK(v == 0.25);
  CHECK_THROWS_AS(LayerNorm(LayerNormParams{Tensor({2}, 1.0), Tensor({2}), 0.0}), ParameterError);
}

// ---------------------------------------------------------------- backward contracts

TEST_CASE("backward without forward is a state error") {
  Rng rng(1);
  const Tensor up({2, 2});
  CHECK_THROWS_AS(Conv1d::init(2, 2, 3, Activation::relu, rng).backward({}, up), StateError);
  CHECK_THROWS_AS(Gru::init(2, 2, rng).backward({}, up), StateError);
  CHECK_THROWS_AS(Attention::init(2, 2, rng).backward({}, up), StateError);
  CHECK_THROWS_AS(Dense::init(2, 2, Activation::identity, rng).backward({}, up), StateError);
  CHECK_THROWS_AS(LayerNorm::init(2).backward({}, up), StateError);
  LayerState<Dense> state(Dense::init(2, 2, Activation::identity, rng));
  CHECK_THROWS_AS(state.backward(up), StateError);
}

TEST_CASE("zero upstream gives zero gradients") {
  Rng rng(12);
  const Tensor x = random_tensor({5, 3}, rng);
  auto all_zero = [](const LayerGrads& g) {
    bool zero = max_abs(g.input) == 0.0;
    for (const auto& t : g.params) zero = zero && max_abs(t) == 0.0;
    return zero;
  };
  {
    LayerState<Conv1d> s(Conv1d::init(3, 4, 3, Activation::relu, rng));
    CHECK(all_zero(s.backward(Tensor(s.forward(x).shape()))));
  }
  {
    LayerState<Gru> s(Gru::init(3, 4, rng));
    CHECK(all_zero(s.backward(Tensor(s.forward(x).shape()))));
  }
  {
    LayerState<Attention> s(Attention::init(3, 2, rng));
    CHECK(all_zero(s.backward(Tensor(s.forward(x).shape()))));
  }
  {
    LayerState<Dense> s(Dense::init(3, 2, Activation::sigmoid, rng));
    CHECK(all_zero(s.backward(Tensor(s.forward(x).shape()))));
  }
  {
    LayerState<LayerNorm> s(LayerNorm::init(3));
    CHECK(all_zero(s.backward(Tensor(s.forward(x).shape()))));
  }
}

// ---------------------------------------------------------------- gradient checks

TEST_CASE("conv1d gradient check") {
  Rng rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = 1 + 2 * rng.below(2), in = 1 + rng.below(4), out = 1 + rng.below(4);
    const auto act = trial % 2 ? Activation::identity : Activation::tanh;
    Conv1d conv = Conv1d::init(in, out, k, act, rng);
    conv.params.bias = randomize_bias(conv.params.bias, rng);
    CHECK(gradient_check(conv, random_tensor({1 + rng.below(5), in}, rng), rng) < kGradTolerance);
  }
}

TEST_CASE("conv1d relu gradient check away from kinks") {
  Rng rng(102);
  for (int trial = 0; trial < 20; ++trial) {
    Conv1d conv = Conv1d::init(2, 3, 3, Activation::relu, rng);
    conv.params.bias = randomize_bias(conv.params.bias, rng);
    const Tensor x = random_tensor({4, 2}, rng);
    // Skip draws with a pre-activation within the finite-difference step of 0.
    const Tensor pre = conv1d_apply(conv.params, x);
    bool near_kink = false;
    for (double v : pre.values()) near_kink = near_kink || std::abs(v) < 1e-3;
    if (near_kink) continue;
    CHECK(gradient_check(conv, x, rng) < kGradTolerance);
  }
}

TEST_CASE("gru gradient check (full BPTT)") {
  Rng rng(103);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t in = 1 + rng.below(4), hidden = 1 + rng.below(4);
    Gru gru = Gru::init(in, hidden, rng);
    for (Tensor* b : {&gru.params.b_reset, &gru.params.b_update, &gru.params.b_candidate})
      *b = randomize_bias(*b, rng);
    CHECK(gradient_check(gru, random_tensor({1 + rng.below(5), in}, rng), rng) < kGradTolerance);
  }
}

TEST_CASE("attention gradient check") {
  Rng rng(104);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 1 + rng.below(4), a = 1 + rng.below(4);
    Attention attn = Attention::init(d, a, rng);
    CHECK(gradient_check(attn, random_tensor({1 + rng.below(5), d}, rng), rng) < kGradTolerance);
  }
}

TEST_CASE("dense gradient check") {
  Rng rng(105);
  const Activation kinds[] = {Activation::identity, Activation::sigmoid, Activation::tanh};
  for (int trial = 0; trial < 21; ++trial) {
    const std::size_t in = 1 + rng.below(4), out = 1 + rng.below(4);
    Dense dense = Dense::init(in, out, kinds[trial % 3], rng);
    dense.params.bias = randomize_bias(dense.params.bias, rng);
    CHECK(gradient_check(dense, random_tensor({1 + rng.below(5), in}, rng), rng) < kGradTolerance);
  }
}

TEST_CASE("layernorm gradient check") {
  Rng rng(106);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 2 + rng.below(3);
    LayerNorm norm = LayerNorm::init(d);
    norm.params.gain = random_tensor({d}, rng, 2.0);
    norm.params.shift = random_tensor({d}, rng);
    CHECK(gradient_check(norm, random_tensor({1 + rng.below(5), d}, rng), rng) < kGradTolerance);
  }
}
