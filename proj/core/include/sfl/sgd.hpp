#pragma once

#include <cstddef>

#include "sfl/layer.hpp"

namespace sfl {

/// Plain SGD. The rate for round t is base / (1 + decay * t); decay = 0 gives
/// a constant rate.
struct SgdState {
  double learning_rate = 0.01;
  double decay = 0.0;

  /// Throws ConfigError unless the rate is finite and non-negative.
  void validate() const;
  double rate_at(std::size_t round) const;
};

/// w <- w - eta * g for every trainable layer. Frozen layers are skipped even
/// when their gradient is nonzero.
template <typename T>
void sgd_step(LayerStack<T>& layers, const Gradients<T>& grads, double eta);

template <typename T>
void freeze(LayerStack<T>& layers);

}  // namespace sfl
