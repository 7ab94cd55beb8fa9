#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

#include "sfl/checkpoint.hpp"
#include "sfl/layer.hpp"
#include "sfl/loss.hpp"
#include "sfl/sgd.hpp"

using namespace sfl;

TEST(SoftmaxCrossEntropy, UniformLogitsGiveLogC) {
  for (std::size_t c : {2u, 5u, 10u}) {
    const auto r = softmax_cross_entropy(TensorD({3, c}, 0.25), std::vector<Label>{0, 1, 1});
    EXPECT_NEAR(r.loss, std::log(static_cast<double>(c)), 1e-12);
  }
}

TEST(SoftmaxCrossEntropy, SaturatedCorrectIsZero) {
  const auto r = softmax_cross_entropy(TensorD({1, 2}, std::vector<double>{1e6, 0.0}), std::vector<Label>{0});
  EXPECT_NEAR(r.loss, 0.0, 1e-12);
  EXPECT_TRUE(r.grad.all_finite());
}

TEST(SoftmaxCrossEntropy, GradientIsSoftmaxMinusOneHot) {
  const auto r = softmax_cross_entropy(TensorD({1, 2}, 0.0), std::vector<Label>{1});
  EXPECT_DOUBLE_EQ(r.grad[0], 0.5);
  EXPECT_DOUBLE_EQ(r.grad[1], -0.5);
}

TEST(SoftmaxCrossEntropy, RowsSumToZeroAndLossNonNegative) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 4.0);
  for (int trial = 0; trial < 50; ++trial) {
    TensorD logits({4, 6});
    for (auto& v : logits.data()) v = n(rng);
    const std::vector<Label> labels{0, 5, 2, 3};
    const auto r = softmax_cross_entropy(logits, labels);
    EXPECT_GE(r.loss, 0.0);
    for (std::size_t i = 0; i < 4; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 6; ++j) s += r.grad[i * 6 + j];
      EXPECT_NEAR(s, 0.0, 1e-15);
    }
  }
}

TEST(SoftmaxCrossEntropy, RejectsBadLabels) {
  EXPECT_THROW(softmax_cross_entropy(TensorD({1, 3}, 0.0), std::vector<Label>{3}), ContractError);
  EXPECT_THROW(softmax_cross_entropy(TensorD({2, 3}, 0.0), std::vector<Label>{0}), ShapeError);
}

TEST(ArgmaxRows, PicksLargest) {
  const auto a = argmax_rows(Tensor({2, 3}, std::vector<float>{0, 2, 1, 5, -1, 4}));
  EXPECT_EQ(a, (std::vector<Label>{1, 0}));
}

namespace {

LayerStack<float> scalar_layer(float w) {
  LayerStack<float> s{Layer<float>::dense(1, 1)};
  s[0].params[0][0] = w;
  return s;
}

Gradients<float> scalar_grad(float g) {
  Gradients<float> grads;
  grads.params = {{Tensor({1, 1}, g), Tensor({1}, 0.0f)}};
  return grads;
}

}  // namespace

TEST(Sgd, Arithmetic) {
  auto s = scalar_layer(1.0f);
  sgd_step(s, scalar_grad(2.0f), 0.5);
  EXPECT_EQ(s[0].params[0][0], 0.0f);
}

TEST(Sgd, ZeroGradientIsFixedPoint) {
  auto s = scalar_layer(1.25f);
  sgd_step(s, scalar_grad(0.0f), 0.5);
  EXPECT_EQ(s[0].params[0][0], 1.25f);
}

TEST(Sgd, FrozenLayerUntouched) {
  auto s = scalar_layer(1.0f);
  freeze(s);
  sgd_step(s, scalar_grad(3.0f), 0.5);
  EXPECT_EQ(s[0].params[0][0], 1.0f);
}

TEST(Sgd, FrozenLayersImmutableUnderRandomSchedules) {
  LayerStack<float> s{Layer<float>::dense(3, 3), Layer<float>::relu(), Layer<float>::dense(3, 2)};
  init_uniform(s, 2);
  s[0].trainable = false;
  const auto frozen = s[0];
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> eta(0.0, 1.0);
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (int step = 0; step < 100; ++step) {
    Tensor x({2, 3});
    for (auto& v : x.data()) v = n(rng);
    const auto trace = forward(s, x);
    const auto loss = softmax_cross_entropy(trace.output(), std::vector<Label>{0, 1});
    sgd_step(s, backward(s, trace, loss.grad), eta(rng));
  }
  EXPECT_EQ(s[0], frozen);
}

TEST(Sgd, ShapeMismatchRejected) {
  auto s = scalar_layer(1.0f);
  Gradients<float> g;
  g.params = {{Tensor({2, 1}, 1.0f), Tensor({1}, 0.0f)}};
  EXPECT_THROW(sgd_step(s, g, 0.1), ShapeError);
}

TEST(Sgd, ScheduleAndValidation) {
  SgdState st{0.1, 1.0};
  EXPECT_DOUBLE_EQ(st.rate_at(0), 0.1);
  EXPECT_DOUBLE_EQ(st.rate_at(3), 0.025);
  EXPECT_THROW((SgdState{-0.1, 0.0}.validate()), ConfigError);
  EXPECT_THROW((SgdState{std::nan(""), 0.0}.validate()), ConfigError);
}

TEST(Sgd, DeterministicUnderSeed) {
  auto run = [] {
    LayerStack<float> s{Layer<float>::conv3x3(1, 2), Layer<float>::relu(), Layer<float>::flatten(),
                        Layer<float>::dense(32, 2)};
    init_uniform(s, 77);
    std::mt19937_64 rng(77);
    std::normal_distribution<float> n(0.0f, 1.0f);
    for (int step = 0; step < 20; ++step) {
      Tensor x({3, 1, 4, 4});
      for (auto& v : x.data()) v = n(rng);
      const auto trace = forward(s, x);
      const auto loss = softmax_cross_entropy(trace.output(), std::vector<Label>{0, 1, 1});
      sgd_step(s, backward(s, trace, loss.grad), 0.05);
    }
    return s;
  };
  EXPECT_EQ(run(), run());
}

TEST(Checkpoint, MatchesHandBuiltBytes) {
  LayerStack<float> s{Layer<float>::dense(1, 1), Layer<float>::relu()};
  s[0].params[0][0] = 1.5f;
  s[0].params[1][0] = -2.0f;
  std::vector<std::uint8_t> want = {'S', 'F', 'L', '1', 2, 0, 0, 0, 1, 2, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0};
  auto push_f32 = [&](float f) {
    std::uint8_t b[4];
    std::memcpy(b, &f, 4);
    want.insert(want.end(), b, b + 4);
  };
  push_f32(1.5f);
  for (std::uint8_t b : {1, 0, 0, 0, 1, 0, 0, 0}) want.push_back(b);
  push_f32(-2.0f);
  want.push_back(5);
  EXPECT_EQ(encode_checkpoint(s), want);
  EXPECT_EQ(decode_checkpoint(want), s);
}

TEST(Checkpoint, RoundTripAndCorruption) {
  LayerStack<float> s{Layer<float>::conv3x3(2, 3), Layer<float>::max_pool(), Layer<float>::residual(3, 4),
                      Layer<float>::flatten(), Layer<float>::dense(4, 2)};
  init_uniform(s, 6);
  const auto bytes = encode_checkpoint(s);
  EXPECT_EQ(decode_checkpoint(bytes), s);

  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  EXPECT_THROW(decode_checkpoint(std::span(bytes).first(bytes.size() - 1)), FormatError);
  auto longer = bytes;
  longer.push_back(0);
  EXPECT_THROW(decode_checkpoint(longer), FormatError);
  auto bad_kind = bytes;
  bad_kind[8] = 9;
  EXPECT_THROW(decode_checkpoint(bad_kind), FormatError);

  const auto path = (std::filesystem::temp_directory_path() / "sfl_ckpt_test.sfl").string();
  save_checkpoint(path, s);
  EXPECT_EQ(load_checkpoint(path), s);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), IoError);
}
