#include "sfl/sgd.hpp"

#include <cmath>
#include <string>

namespace sfl {

void SgdState::validate() const {
  if (!std::isfinite(learning_rate) || learning_rate < 0.0) {
    throw ConfigError("learning rate must be finite and >= 0, got " + std::to_string(learning_rate));
  }
  if (!std::isfinite(decay) || decay < 0.0) {
    throw ConfigError("learning-rate decay must be finite and >= 0, got " + std::to_string(decay));
  }
}

double SgdState::rate_at(std::size_t round) const {
  return learning_rate / (1.0 + decay * static_cast<double>(round));
}

template <typename T>
void sgd_step(LayerStack<T>& layers, const Gradients<T>& grads, double eta) {
  if (grads.params.size() != layers.size()) {
    throw ShapeError("sgd_step: gradients for " + std::to_string(grads.params.size()) + " layers, stack has " +
                     std::to_string(layers.size()));
  }
  const T step = static_cast<T>(eta);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& layer = layers[i];
    if (!layer.trainable || layer.params.empty()) continue;
    const auto& g = grads.params[i];
    if (g.size() != layer.params.size()) throw ShapeError("sgd_step: layer " + std::to_string(i) + " gradient count mismatch");
    for (std::size_t p = 0; p < g.size(); ++p) {
      auto& w = layer.params[p];
      if (w.shape() != g[p].shape()) {
        throw ShapeError("sgd_step: layer " + std::to_string(i) + " gradient shape " + to_string(g[p].shape()) +
                         " vs parameter " + to_string(w.shape()));
      }
      for (std::size_t k = 0; k < w.size(); ++k) w[k] -= step * g[p][k];
    }
  }
}

template <typename T>
void freeze(LayerStack<T>& layers) {
  for (auto& l : layers) l.trainable = false;
}

template void sgd_step<float>(LayerStack<float>&, const Gradients<float>&, double);
template void sgd_step<double>(LayerStack<double>&, const Gradients<double>&, double);
template void freeze<float>(LayerStack<float>&);
template void freeze<double>(LayerStack<double>&);

}  // namespace sfl
