#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sfl/layer.hpp"

namespace sfl {

/// Weight checkpoint, little-endian:
///   "SFL1" | u32 layer count | per layer: u8 kind tag, then for each of the
///   kind's parameter tensors: u32 rank, u32 dims..., f32 payload.
/// The parameter-tensor count is implied by the kind tag. Loaded layers are
/// trainable; freezing is a property of the run, not of the weights.
std::vector<std::uint8_t> encode_checkpoint(const LayerStack<float>& layers);
LayerStack<float> decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::string& path, const LayerStack<float>& layers);
LayerStack<float> load_checkpoint(const std::string& path);

}  // namespace sfl
