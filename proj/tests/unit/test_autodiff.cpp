#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "deepglioma/core/array_io.hpp"
#include "deepglioma/core/layers.hpp"
#include "deepglioma/core/optim.hpp"
#include "support/gradcheck.hpp"

namespace ad = deepglioma::ad;
using ad::Array;
using ad::Parameter;
using ad::Shape;
using ad::Tape;
using ad::Var;

namespace {

constexpr double kGradTol = 1e-5;

Parameter random_param(const std::string& name, Shape shape, ad::Rng& rng, double scale = 1.0) {
  return Parameter(name, ad::random_normal(std::move(shape), scale, rng));
}

void expect_grad_ok(const std::function<Var(Tape&)>& loss, const std::vector<Parameter*>& params) {
  const auto r = dgtest::check_gradients(loss, params);
  EXPECT_LE(r.max_rel_error, kGradTol) << "worst parameter: " << r.worst_parameter;
}

}  // namespace

TEST(ReverseGrad, SumIsAllOnes) {
  Parameter p("p", Array::vector({0.3, -1.0, 2.0}));
  Tape t;
  Var loss = ad::sum(t.param(p));
  auto g = t.gradients(loss, std::vector<Parameter*>{&p});
  EXPECT_EQ(g[0], Array::vector({1.0, 1.0, 1.0}));
}

TEST(ReverseGrad, QuadraticFormGradient) {
  Parameter p("p", Array::vector({2.0, 0.0, -1.0}));
  Tape t;
  Var v = t.param(p);
  Var loss = ad::sum(ad::mul(v, v));
  auto g = ad::reverse_grad(loss, {&p});
  EXPECT_EQ(g[0], Array::vector({4.0, 0.0, -2.0}));
}

TEST(ReverseGrad, SharedSubexpressionsAccumulate) {
  Parameter p("p", Array::vector({1.0, 2.0}));
  Tape t;
  Var v = t.param(p);
  Var sq = ad::mul(v, v);
  // loss = sum(v*v) + sum(v*v) + sum(v): dL/dv = 4v + 1
  Var loss = ad::add(ad::add(ad::sum(sq), ad::sum(sq)), ad::sum(t.param(p)));
  auto g = ad::reverse_grad(loss, {&p});
  EXPECT_DOUBLE_EQ(g[0][0], 5.0);
  EXPECT_DOUBLE_EQ(g[0][1], 9.0);
}

TEST(ReverseGrad, RejectsNonScalarLoss) {
  Parameter p("p", Array::vector({1.0, 2.0}));
  Tape t;
  Var v = t.param(p);
  EXPECT_THROW(ad::reverse_grad(v, {&p}), std::invalid_argument);
}

TEST(ReverseGrad, RejectsParameterNotOnTape) {
  Parameter p("p", Array::vector({1.0}));
  Parameter q("q", Array::vector({1.0}));
  Tape t;
  Var loss = ad::sum(t.param(p));
  EXPECT_THROW(ad::reverse_grad(loss, {&p, &q}), std::invalid_argument);
}

TEST(ReverseGrad, UnreachedParameterGetsZeroGradient) {
  Parameter p("p", Array::vector({1.0}));
  Parameter q("q", Array::vector({3.0, 4.0}));
  Tape t;
  t.param(q);
  Var loss = ad::sum(t.param(p));
  auto g = ad::reverse_grad(loss, {&p, &q});
  EXPECT_EQ(g[1], Array(Shape{2}));
}

TEST(ReverseGrad, NonFiniteValuesAreRejected) {
  Tape t;
  Var v = t.constant(Array::vector({800.0}));
  EXPECT_THROW(ad::exp(v), std::domain_error);
  EXPECT_THROW(ad::log(t.constant(Array::vector({0.0}))), std::domain_error);
}

// ---------------------------------------------------------------------------
// Finite-difference checks, one per primitive

TEST(GradCheck, ElementwiseOps) {
  ad::Rng rng(1);
  Parameter a = random_param("a", {3, 4}, rng);
  Parameter b = random_param("b", {3, 4}, rng);
  Parameter pos("pos", ad::random_uniform({3, 4}, 1.0, rng));
  for (double& v : pos.value.values()) v = std::abs(v) + 0.5;
  Array mask = ad::random_normal({3, 4}, 1.0, rng);

  expect_grad_ok([&](Tape& t) { return ad::sum(ad::mul(ad::add(t.param(a), t.param(b)), t.param(a))); }, {&a, &b});
  expect_grad_ok([&](Tape& t) { return ad::sum(ad::mul(ad::sub(t.param(a), t.param(b)), t.param(b))); }, {&a, &b});
  expect_grad_ok([&](Tape& t) { return ad::sum(ad::mul_const(ad::exp(ad::affine(t.param(a), 0.5, 0.1)), mask)); },
                 {&a});
  expect_grad_ok([&](Tape& t) { return ad::sum(ad::mul_const(ad::log(t.param(pos)), mask)); }, {&pos});
  expect_grad_ok([&](Tape& t) { return ad::sum(ad::mul_const(ad::sigmoid(t.param(a)), mask)); }, {&a});
  expect_grad_ok([&](Tape& t) { return ad::sum(ad::mul_const(ad::relu(t.param(a)), mask)); }, {&a});
  expect_grad_ok([&](Tape& t) { return ad::mean(ad::mul_const(ad::clamp(t.param(pos), 0.0, 10.0), mask)); }, {&pos});
}

TEST(GradCheck, ShapeOps) {
  ad::Rng rng(2);
  Parameter a = random_param("a", {4, 6}, rng);
  Parameter b = random_param("b", {4, 2}, rng);
  Parameter c = random_param("c", {3, 6}, rng);
  Array w = ad::random_normal({6, 4}, 1.0, rng);
  Array w2 = ad::random_normal({4, 8}, 1.0, rng);
  Array w3 = ad::random_normal({7, 6}, 1.0, rng);
  Array w4 = ad::random_normal({5, 6}, 1.0, rng);

  expect_grad_ok([&](Tape& t) { return ad::sum(ad::mul_const(ad::transpose(t.param(a)), w)); }, {&a});
  expect_grad_ok([&](Tape& t) { return ad::sum(ad::mul_const(ad::reshape(t.param(a), {6, 4}), w)); }, {&a});
  expect_grad_ok(
      [&](Tape& t) {
        Var s = ad::slice_cols(t.param(a), 1, 3);
        Var cat = ad::concat_cols({s, t.param(b), ad::slice_cols(t.param(a), 0, 3)});
        return ad::sum(ad::mul_const(cat, w2));
      },
      {&a, &b});
  expect_grad_ok(
      [&](Tape& t) {
        std::vector<Var> parts{t.param(a), t.param(c)};
        return ad::sum(ad::mul_const(ad::concat_rows(parts), w3));
      },
      {&a, &c});
  expect_grad_ok([&](Tape& t) { return ad::sum(ad::mul_const(ad::gather_rows(t.param(a), {3, 0, 3, 1, 3}), w4)); },
                 {&a});
}

TEST(GradCheck, LinearAlgebra) {
  ad::Rng rng(3);
  Parameter a = random_param("a", {3, 5}, rng);
  Parameter b = random_param("b", {5, 4}, rng);
  Parameter c = random_param("c", {4, 5}, rng);
  Parameter bias = random_param("bias", {4}, rng);
  Parameter d = random_param("d", {3, 5}, rng);
  Array m = ad::random_normal({3, 4}, 1.0, rng);

  expect_grad_ok([&](Tape& t) { return ad::sum(ad::mul_const(ad::matmul(t.param(a), t.param(b)), m)); }, {&a, &b});
  expect_grad_ok([&](Tape& t) { return ad::sum(ad::mul_const(ad::matmul_nt(t.param(a), t.param(c)), m)); },
                 {&a, &c});
  expect_grad_ok(
      [&](Tape& t) { return ad::sum(ad::mul_const(ad::add_bias(ad::matmul(t.param(a), t.param(b)), t.param(bias)), m)); },
      {&a, &b, &bias});
  expect_grad_ok([&](Tape& t) { return ad::sum(ad::mul(ad::rowwise_dot(t.param(a), t.param(d)), ad::rowwise_dot(t.param(a), t.param(a)))); },
                 {&a, &d});
}

TEST(GradCheck, SoftmaxAndNormalisation) {
  ad::Rng rng(4);
  Parameter a = random_param("a", {4, 5}, rng);
  Parameter s = random_param("s", {5, 5}, rng, 2.0);
  Parameter gain = random_param("gain", {5}, rng);
  Parameter shift = random_param("shift", {5}, rng);
  Array m = ad::random_normal({4, 5}, 1.0, rng);
  Array m5 = ad::random_normal({5, 5}, 1.0, rng);

  expect_grad_ok([&](Tape& t) { return ad::sum(ad::mul_const(ad::softmax_rows(t.param(a)), m)); }, {&a});
  expect_grad_ok([&](Tape& t) { return ad::sum(ad::mul_const(ad::log_softmax_offdiag(t.param(s)), m5)); }, {&s});
  expect_grad_ok([&](Tape& t) { return ad::sum(ad::mul_const(ad::l2_normalize_rows(t.param(a)), m)); }, {&a});
  expect_grad_ok(
      [&](Tape& t) { return ad::sum(ad::mul_const(ad::layer_norm_rows(t.param(a), t.param(gain), t.param(shift)), m)); },
      {&a, &gain, &shift});
}

TEST(GradCheck, ConvolutionAndPooling) {
  ad::Rng rng(5);
  Parameter x = random_param("x", {2, 2, 7, 6}, rng);
  ad::Conv2d conv("conv", 2, 3, ad::ConvGeometry{}, rng);
  conv.bias.value = ad::random_normal({3}, 0.5, rng);
  Array m = ad::random_normal({2, 3}, 1.0, rng);
  expect_grad_ok([&](Tape& t) { return ad::sum(ad::mul_const(ad::global_avg_pool(conv(t, t.param(x))), m)); },
                 {&x, &conv.weight, &conv.bias});

  ad::Conv2d conv1("conv1", 3, 2, ad::ConvGeometry{3, 1, 1}, rng);
  Parameter y = random_param("y", {1, 3, 4, 5}, rng);
  Array m2 = ad::random_normal({1, 2, 4, 5}, 1.0, rng);
  expect_grad_ok([&](Tape& t) { return ad::sum(ad::mul_const(conv1(t, t.param(y)), m2)); },
                 {&y, &conv1.weight, &conv1.bias});

  Array m3 = ad::random_normal({2, 2, 7, 6}, 1.0, rng);
  expect_grad_ok([&](Tape& t) { return ad::sum(ad::mul_const(ad::channel_affine(t.param(x), {2.0, -0.5}, {1.0, 3.0}), m3)); },
                 {&x});
}

TEST(ChannelAffine, ScalesEachChannel) {
  Tape t;
  Array x(ad::Shape{1, 2, 1, 2});
  for (std::size_t i = 0; i < 4; ++i) x[i] = static_cast<double>(i);
  const Array y = ad::channel_affine(t.constant(x), {2.0, 10.0}, {1.0, -1.0}).value();
  EXPECT_EQ(y[0], 1.0);
  EXPECT_EQ(y[1], 3.0);
  EXPECT_EQ(y[2], 19.0);
  EXPECT_EQ(y[3], 29.0);
  EXPECT_THROW(ad::channel_affine(t.constant(x), {1.0}, {0.0}), std::invalid_argument);
}

TEST(GradCheck, MultiHeadAttentionBlocks) {
  ad::Rng rng(6);
  ad::MultiHeadAttention attn("attn", 8, 2, rng);
  Parameter tokens = random_param("tokens", {6, 8}, rng);
  Array m = ad::random_normal({6, 8}, 1.0, rng);
  auto params = attn.parameters();
  params.push_back(&tokens);
  // two sequences of three tokens each
  expect_grad_ok([&](Tape& t) { return ad::sum(ad::mul_const(attn(t, t.param(tokens), 3), m)); }, params);
}

TEST(GradCheck, CompositeOfLayers) {
  ad::Rng rng(7);
  ad::Conv2d conv("conv", 3, 4, ad::ConvGeometry{}, rng);
  ad::Linear proj("proj", 4, 8, rng);
  ad::LayerNorm norm("norm", 8);
  ad::MultiHeadAttention attn("attn", 8, 4, rng);
  ad::Linear out("out", 8, 1, rng);
  Parameter x = random_param("x", {2, 3, 9, 9}, rng);
  auto params = ad::concat_params(conv.parameters(), proj.parameters(), norm.parameters(), attn.parameters(),
                                  out.parameters());
  params.push_back(&x);
  expect_grad_ok(
      [&](Tape& t) {
        Var z = ad::l2_normalize_rows(ad::global_avg_pool(ad::relu(conv(t, t.param(x)))));
        Var h = norm(t, proj(t, z));
        Var a = attn(t, h, 2);
        return ad::mean(ad::sigmoid(out(t, ad::add(a, h))));
      },
      params);
}

// ---------------------------------------------------------------------------
// Attention semantics

TEST(MultiHeadAttention, SingleTokenIdentityProjectionsReturnsToken) {
  ad::Rng rng(8);
  ad::MultiHeadAttention attn("attn", 4, 1, rng);
  for (ad::Linear* l : {&attn.query, &attn.key, &attn.value, &attn.output}) {
    l->weight.value = Array(Shape{4, 4});
    for (std::size_t i = 0; i < 4; ++i) l->weight.value.at(i, i) = 1.0;
    l->bias.value.fill(0.0);
  }
  Tape t;
  Array token = Array::matrix(1, 4, {0.5, -1.0, 2.0, 0.25});
  Var out = ad::multi_head_attention(t, t.constant(token), attn);
  EXPECT_EQ(out.value(), token);

  Array twin = Array::matrix(2, 4, {0.5, -1.0, 2.0, 0.25, 0.5, -1.0, 2.0, 0.25});
  Var out2 = ad::multi_head_attention(t, t.constant(twin), attn);
  EXPECT_LE(ad::max_abs_diff(out2.value(), twin), 1e-15);
}

TEST(MultiHeadAttention, RowsAreProbabilityDistributions) {
  ad::Rng rng(9);
  ad::MultiHeadAttention attn("attn", 8, 2, rng);
  Tape t;
  Var tokens = t.constant(ad::random_normal({4, 8}, 1.5, rng));
  ad::AttentionWeights w;
  Var out = ad::multi_head_attention(t, tokens, attn, &w);
  EXPECT_EQ(out.shape(), (Shape{4, 8}));
  for (std::size_t h = 0; h < w.heads; ++h)
    for (std::size_t q = 0; q < w.tokens; ++q) {
      double s = 0.0;
      for (std::size_t k = 0; k < w.tokens; ++k) {
        EXPECT_GE(w.at(0, h, q, k), 0.0);
        s += w.at(0, h, q, k);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(MultiHeadAttention, RejectsIndivisibleHeads) {
  ad::Rng rng(10);
  EXPECT_THROW(ad::MultiHeadAttention("attn", 6, 4, rng), std::invalid_argument);
  ad::MultiHeadAttention attn("attn", 8, 2, rng);
  Tape t;
  EXPECT_THROW(attn(t, t.constant(Array(Shape{3, 6})), 3), std::invalid_argument);
}

TEST(Forward, DeterministicGivenInputsAndWeights) {
  ad::Rng rng(11);
  ad::MultiHeadAttention attn("attn", 8, 4, rng);
  Array x = ad::random_normal({5, 8}, 1.0, rng);
  Tape t1, t2;
  EXPECT_EQ(ad::multi_head_attention(t1, t1.constant(x), attn).value(),
            ad::multi_head_attention(t2, t2.constant(x), attn).value());
}

// ---------------------------------------------------------------------------
// Optimiser and schedule

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Parameter p("p", Array::vector({1.0, -2.0}));
  std::vector<Parameter*> params{&p};
  auto state = ad::make_adam(params);
  ad::adam_step(state, params, std::vector<Array>{Array(Shape{2})});
  EXPECT_EQ(p.value, Array::vector({1.0, -2.0}));
}

TEST(Adam, FirstStepMovesByLearningRateTimesSign) {
  Parameter p("p", Array::vector({1.0, 1.0, 1.0}));
  std::vector<Parameter*> params{&p};
  auto state = ad::make_adam(params, {.lr = 0.01});
  ad::adam_step(state, params, std::vector<Array>{Array::vector({3.0, -0.5, 0.02})});
  EXPECT_NEAR(p.value[0] - 1.0, -0.01, 0.01 * 1e-6);
  EXPECT_NEAR(p.value[1] - 1.0, 0.01, 0.01 * 1e-6);
  EXPECT_NEAR(p.value[2] - 1.0, -0.01, 0.01 * 1e-6);
}

TEST(Adam, TwoStepsMatchHandSimulatedTrace) {
  // Hand-rolled reference on f(w) = w0^2 + 3 w1.
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double w[2] = {1.5, -0.5}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int step = 1; step <= 2; ++step) {
    const double g[2] = {2.0 * w[0], 3.0};
    for (int i = 0; i < 2; ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(b1, step));
      const double vh = v[i] / (1 - std::pow(b2, step));
      w[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }

  Parameter p("p", Array::vector({1.5, -0.5}));
  std::vector<Parameter*> params{&p};
  auto state = ad::make_adam(params, {.lr = lr});
  for (int step = 0; step < 2; ++step) {
    Tape t;
    Var x = t.param(p);
    Var loss = ad::add(ad::sum(ad::mul(ad::slice_cols(ad::reshape(x, {1, 2}), 0, 1), ad::slice_cols(ad::reshape(x, {1, 2}), 0, 1))),
                       ad::scale(ad::sum(ad::slice_cols(ad::reshape(x, {1, 2}), 1, 1)), 3.0));
    ad::adam_step(state, params, t.gradients(loss, params));
  }
  EXPECT_NEAR(p.value[0], w[0], 1e-14);
  EXPECT_NEAR(p.value[1], w[1], 1e-14);
  EXPECT_EQ(state.step, 2u);
}

TEST(Adam, RejectsShapeMismatch) {
  Parameter p("p", Array::vector({1.0, 2.0}));
  std::vector<Parameter*> params{&p};
  auto state = ad::make_adam(params);
  EXPECT_THROW(ad::adam_step(state, params, std::vector<Array>{Array(Shape{3})}), std::invalid_argument);
}

TEST(CosineLr, Endpoints) {
  EXPECT_DOUBLE_EQ(ad::cosine_lr(0, 100, 1e-3, 1e-5), 1e-3);
  EXPECT_NEAR(ad::cosine_lr(100, 100, 1e-3, 1e-5), 1e-5, 1e-18);
  EXPECT_NEAR(ad::cosine_lr(50, 100, 1e-3, 1e-5), (1e-3 + 1e-5) / 2.0, 1e-18);
  EXPECT_THROW(ad::cosine_lr(101, 100, 1e-3), std::invalid_argument);
}

TEST(CosineLr, MonotoneNonIncreasing) {
  double prev = ad::cosine_lr(0, 37, 0.5, 0.01);
  for (std::size_t s = 1; s <= 37; ++s) {
    const double lr = ad::cosine_lr(s, 37, 0.5, 0.01);
    EXPECT_LE(lr, prev);
    prev = lr;
  }
}

// ---------------------------------------------------------------------------
// Binary array format

TEST(ArrayIo, RandomBundlesRoundTrip) {
  ad::Rng rng(12);
  std::uniform_int_distribution<std::size_t> extent(1, 5), rank(0, 3);
  for (int trial = 0; trial < 20; ++trial) {
    ad::ArrayBundle b;
    b.meta = {{"trial", trial}};
    for (int k = 0; k < 3; ++k) {
      Shape s(rank(rng));
      for (auto& e : s) e = extent(rng);
      b.arrays.push_back({"a" + std::to_string(k), ad::random_normal(s, 10.0, rng)});
    }
    const auto decoded = ad::decode_arrays(ad::encode_arrays(b));
    ASSERT_EQ(decoded.arrays.size(), 3u);
    for (int k = 0; k < 3; ++k) {
      EXPECT_EQ(decoded.arrays[k].name, b.arrays[k].name);
      EXPECT_EQ(decoded.arrays[k].array, b.arrays[k].array);
    }
    EXPECT_EQ(decoded.meta, b.meta);
  }
}

TEST(ArrayIo, HeaderIsJsonLineAndPayloadLittleEndian) {
  ad::ArrayBundle b;
  b.arrays.push_back({"data", Array::vector({1.0})});
  const std::string bytes = ad::encode_arrays(b);
  const auto nl = bytes.find('\n');
  const auto header = nlohmann::json::parse(bytes.substr(0, nl));
  EXPECT_EQ(header["dtype"], "f64");
  EXPECT_EQ(header["byte_order"], "little");
  EXPECT_EQ(header["arrays"][0]["shape"], nlohmann::json::array({1}));
  // 1.0 = 0x3FF0000000000000
  EXPECT_EQ(static_cast<unsigned char>(bytes[nl + 8]), 0x3Fu);
  EXPECT_EQ(static_cast<unsigned char>(bytes[nl + 7]), 0xF0u);
  EXPECT_THROW(ad::decode_arrays(bytes.substr(0, bytes.size() - 1)), std::runtime_error);
}
