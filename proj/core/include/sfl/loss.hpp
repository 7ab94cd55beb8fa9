#pragma once

#include <cstdint>
#include <span>

#include "sfl/tensor.hpp"

namespace sfl {

using Label = std::uint16_t;

template <typename T>
struct LossResult {
  T loss{};
  BasicTensor<T> grad;  ///< d(mean loss)/d(logits), same shape as the logits
};

/// Mean softmax cross-entropy over a (N, C) logits batch. Numerically stable
/// for saturated logits.
template <typename T>
LossResult<T> softmax_cross_entropy(const BasicTensor<T>& logits, std::span<const Label> labels);

/// Index of the largest logit in each row.
template <typename T>
std::vector<Label> argmax_rows(const BasicTensor<T>& logits);

}  // namespace sfl
