#pragma once

#include <cstddef>
#include <span>

#include "sfl/layer.hpp"

namespace sfl {

/// Sample-weighted elementwise mean: W = sum_k (n_k / n) W_k.
///
/// Evaluated as W_0 + sum_k (n_k / n)(W_k - W_0) in double precision, so
/// identical inputs come back bit-identical. All inputs must share the layer
/// structure of the first; sum(n_k) must be positive.
template <typename T>
LayerStack<T> fedavg(std::span<const LayerStack<T>> models, std::span<const std::size_t> sample_counts);

}  // namespace sfl
