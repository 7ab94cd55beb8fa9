#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sfl/layer.hpp"
#include "sfl/loss.hpp"
#include "sfl/tensor.hpp"

namespace sfl {

/// 8-bit per-tensor affine encoding of an activation batch plus the metadata
/// that travels with it from device to server.
///
/// value_i ~= min_val + scale * payload_i, scale = (max - min) / 255.
/// A constant tensor encodes as scale = 0 with an all-zero payload.
struct QuantizedActivation {
  Shape shape;
  float scale = 0.0f;
  float min_val = 0.0f;
  std::vector<std::uint8_t> payload;
  std::vector<Label> labels;
  std::uint32_t round_tag = 0;
  std::uint16_t device_id = 0;
  std::uint32_t batch_index = 0;

  friend bool operator==(const QuantizedActivation&, const QuantizedActivation&) = default;
};

/// Full-precision activation record, used when quantization is switched off.
struct RawActivation {
  Tensor values;
  std::vector<Label> labels;
  std::uint32_t round_tag = 0;
  std::uint16_t device_id = 0;
  std::uint32_t batch_index = 0;

  friend bool operator==(const RawActivation&, const RawActivation&) = default;
};

/// Metadata fields (labels, tags) are left empty for the caller to fill.
/// Rounding is half away from zero. Throws ContractError on NaN/Inf.
template <typename T>
QuantizedActivation quantize(const BasicTensor<T>& a);

template <typename T>
BasicTensor<T> dequantize(const QuantizedActivation& z);

/// Wire/buffer record, little-endian:
///   "QACT" | u32 round_tag | u16 device_id | u32 batch_index | u8 rank |
///   u32 dims... | f32 scale | f32 min | u32 label count | u16 labels... |
///   payload bytes (one per element)
std::vector<std::uint8_t> serialize(const QuantizedActivation& z);
QuantizedActivation deserialize_qact(std::span<const std::uint8_t> bytes);

/// Size of the QACT record for the given rank, element count and label count.
std::size_t qact_record_size(std::size_t rank, std::size_t elements, std::size_t labels);

struct QuantizationError {
  double gradient_error = 0.0;   ///< ||grad F_S(a_hat) - grad F_S(a)|| over server parameters
  double loss_difference = 0.0;  ///< F_S(a_hat) - F_S(a)
};

/// Gradient discrepancy the quantizer induces on the server stack for one
/// activation batch, using the batch-mean cross-entropy. With `enabled`
/// false the quantizer is the identity and both fields are zero.
template <typename T>
QuantizationError quantization_error(const BasicTensor<T>& activation, std::span<const Label> labels,
                                     const LayerStack<T>& server, bool enabled = true);

}  // namespace sfl
