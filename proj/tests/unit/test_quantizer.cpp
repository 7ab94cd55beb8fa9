#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "sfl/layer.hpp"
#include "sfl/quantizer.hpp"

using namespace sfl;

namespace {

float ulp(float a, float b) {
  const float m = std::max(std::abs(a), std::abs(b));
  return std::nextafter(m, std::numeric_limits<float>::infinity()) - m;
}

Tensor random_activation(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> dim(1, 6);
  std::uniform_real_distribution<float> centre(-50.0f, 50.0f), spread(1e-3f, 20.0f);
  const Shape shape{dim(rng), dim(rng), dim(rng)};
  Tensor t(shape);
  const float c = centre(rng), s = spread(rng);
  std::normal_distribution<float> n(c, s);
  for (auto& v : t.data()) v = n(rng);
  return t;
}

}  // namespace

TEST(Quantize, KnownValues) {
  const Tensor a({1, 4}, std::vector<float>{0.0f, 1.0f, 2.0f, 2.55f});
  const auto z = quantize(a);
  EXPECT_FLOAT_EQ(z.min_val, 0.0f);
  EXPECT_FLOAT_EQ(z.scale, 0.01f);
  EXPECT_EQ(z.payload, (std::vector<std::uint8_t>{0, 100, 200, 255}));
}

TEST(Quantize, ConstantTensorIsExact) {
  const Tensor c({2, 3}, -4.25f);
  const auto z = quantize(c);
  EXPECT_EQ(z.scale, 0.0f);
  EXPECT_EQ(z.payload, std::vector<std::uint8_t>(6, 0));
  EXPECT_EQ(dequantize<float>(z), c);
}

TEST(Quantize, RejectsNonFinite) {
  Tensor a({1, 2}, 1.0f);
  a[1] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(quantize(a), ContractError);
  a[1] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(quantize(a), ContractError);
}

TEST(Quantize, RoundTripWithinHalfStepPlusUlp) {
  std::mt19937_64 rng(123);
  for (int trial = 0; trial < 2000; ++trial) {
    const Tensor a = random_activation(rng);
    const auto z = quantize(a);
    const Tensor back = dequantize<float>(z);
    ASSERT_EQ(back.shape(), a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) {
      ASSERT_LE(std::abs(back[i] - a[i]), z.scale / 2 + ulp(a[i], back[i])) << "trial " << trial << " i " << i;
    }
  }
}

TEST(Quantize, IdempotentOnGrid) {
  std::mt19937_64 rng(321);
  for (int trial = 0; trial < 500; ++trial) {
    const auto z = quantize(random_activation(rng));
    const Tensor grid = dequantize<float>(z);
    const auto z2 = quantize(grid);
    EXPECT_EQ(z2.payload, z.payload);
    const Tensor again = dequantize<float>(z2);
    for (std::size_t i = 0; i < grid.size(); ++i) ASSERT_LE(std::abs(again[i] - grid[i]), ulp(again[i], grid[i]));
  }
}

TEST(Quantize, MonotoneInInput) {
  Tensor a({1, 64});
  for (std::size_t i = 0; i < 64; ++i) a[i] = std::sin(0.3f * static_cast<float>(i));
  const auto z = quantize(a);
  for (std::size_t i = 0; i < 64; ++i) {
    for (std::size_t j = 0; j < 64; ++j) {
      if (a[i] < a[j]) ASSERT_LE(z.payload[i], z.payload[j]);
    }
  }
}

TEST(Qact, SerializeRoundTripAndSize) {
  std::mt19937_64 rng(7);
  auto z = quantize(random_activation(rng));
  z.labels = std::vector<Label>(z.shape[0], 3);
  z.round_tag = 17;
  z.device_id = 4;
  z.batch_index = 9;
  const auto bytes = serialize(z);
  EXPECT_EQ(bytes.size(), qact_record_size(z.shape.size(), z.payload.size(), z.labels.size()));
  EXPECT_EQ(bytes.size(), 27 + 4 * z.shape.size() + 2 * z.labels.size() + z.payload.size());
  EXPECT_EQ(deserialize_qact(bytes), z);
}

TEST(Qact, CorruptRecordsRejected) {
  QuantizedActivation z = quantize(Tensor({2, 2}, std::vector<float>{0, 1, 2, 3}));
  z.labels = {0, 1};
  const auto bytes = serialize(z);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(deserialize_qact(bad), FormatError);
  EXPECT_THROW(deserialize_qact(std::span(bytes).first(bytes.size() - 1)), FormatError);
  auto longer = bytes;
  longer.push_back(1);
  EXPECT_THROW(deserialize_qact(longer), FormatError);
}

TEST(QuantizationError, ZeroWhenDisabledPositiveWhenOn) {
  LayerStack<float> server{Layer<float>::flatten(), Layer<float>::dense(12, 2)};
  init_uniform(server, 4);
  std::mt19937_64 rng(4);
  std::normal_distribution<float> n(0.0f, 1.0f);
  Tensor a({2, 3, 2, 2});
  for (auto& v : a.data()) v = n(rng);
  const std::vector<Label> labels{0, 1};
  const auto off = quantization_error(a, labels, server, false);
  EXPECT_EQ(off.gradient_error, 0.0);
  EXPECT_EQ(off.loss_difference, 0.0);
  const auto on = quantization_error(a, labels, server, true);
  EXPECT_GT(on.gradient_error, 0.0);
  EXPECT_LT(on.gradient_error, 1.0);
}

TEST(QuantizationError, ZeroOnGridActivations) {
  LayerStack<double> server{Layer<double>::dense(4, 3)};
  init_uniform(server, 2);
  // Every value lies on the grid of min 0, scale 1: quantization is exact.
  const TensorD a({2, 4}, std::vector<double>{0, 255, 3, 7, 100, 1, 2, 250});
  const auto e = quantization_error(a, std::vector<Label>{1, 2}, server, true);
  EXPECT_EQ(e.gradient_error, 0.0);
}
