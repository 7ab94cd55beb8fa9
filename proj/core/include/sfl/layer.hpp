#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "sfl/tensor.hpp"

namespace sfl {

/// On-disk tags double as enum values; do not renumber.
enum class LayerKind : std::uint8_t {
  Dense = 1,
  Conv3x3 = 2,
  Conv1x1 = 3,
  MaxPool2x2 = 4,
  ReLU = 5,
  Flatten = 6,
  ResidualBlock = 7,
};

std::string_view to_string(LayerKind kind);

/// Number of parameter tensors a layer of `kind` carries.
std::size_t param_tensor_count(LayerKind kind);

/// One layer of a sequential stack.
///
/// Parameter layout per kind:
///   Dense          weight (in, out), bias (out)
///   Conv3x3/1x1    weight (out_ch, in_ch, k, k), bias (out_ch); padding k/2
///   ResidualBlock  conv1 w/b (in -> width, 3x3), conv2 w/b (width -> width, 3x3),
///                  downsample w/b (in -> width, 1x1)
///
/// The residual block computes relu(pool(conv2(relu(conv1(x)))) + down(pool(x))).
template <typename T>
struct Layer {
  LayerKind kind = LayerKind::ReLU;
  std::vector<BasicTensor<T>> params;
  bool trainable = true;

  static Layer dense(std::size_t in, std::size_t out);
  static Layer conv3x3(std::size_t in_ch, std::size_t out_ch);
  static Layer conv1x1(std::size_t in_ch, std::size_t out_ch);
  static Layer residual(std::size_t in_ch, std::size_t width);
  static Layer max_pool();
  static Layer relu();
  static Layer flatten();

  std::size_t parameter_count() const;

  template <typename U>
  Layer<U> cast() const {
    Layer<U> out;
    out.kind = kind;
    out.trainable = trainable;
    for (const auto& p : params) out.params.push_back(p.template cast<U>());
    return out;
  }

  friend bool operator==(const Layer& a, const Layer& b) {
    return a.kind == b.kind && a.trainable == b.trainable && a.params == b.params;
  }
};

template <typename T>
using LayerStack = std::vector<Layer<T>>;

/// Per-sample output shape (no batch axis). Throws ShapeError when `input`
/// is not acceptable to the layer.
template <typename T>
Shape output_shape(const Layer<T>& layer, const Shape& input);

/// Per-sample output shape of a whole stack; the error names the layer index.
template <typename T>
Shape output_shape(const LayerStack<T>& layers, const Shape& input);

template <typename T>
std::size_t parameter_count(const LayerStack<T>& layers);

/// Forward multiply-accumulate count for one sample.
template <typename T>
std::uint64_t forward_macs(const Layer<T>& layer, const Shape& input);

template <typename T>
std::uint64_t forward_macs(const LayerStack<T>& layers, const Shape& input);

/// Seeded uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init of every parameter.
template <typename T>
void init_uniform(LayerStack<T>& layers, std::uint64_t seed);

/// FNV-1a over layer kinds, shapes and parameter bytes.
template <typename T>
std::uint64_t weights_digest(const LayerStack<T>& layers);

/// boundaries[i] is the input of layer i; boundaries.back() is the output.
template <typename T>
struct Trace {
  std::vector<BasicTensor<T>> boundaries;
  std::uint64_t digest = 0;

  const BasicTensor<T>& output() const { return boundaries.back(); }
};

template <typename T>
struct Gradients {
  /// Indexed like the layer stack; empty for parameter-free layers.
  std::vector<std::vector<BasicTensor<T>>> params;
  BasicTensor<T> input;
};

template <typename T>
Trace<T> forward(const LayerStack<T>& layers, const BasicTensor<T>& batch);

/// Output only; nothing retained.
template <typename T>
BasicTensor<T> predict(const LayerStack<T>& layers, const BasicTensor<T>& batch);

/// Rejects a trace whose recorded digest no longer matches `layers`.
template <typename T>
Gradients<T> backward(const LayerStack<T>& layers, const Trace<T>& trace,
                      const BasicTensor<T>& loss_grad);

}  // namespace sfl
