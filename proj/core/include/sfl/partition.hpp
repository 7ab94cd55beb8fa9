#pragma once

#include <cstddef>
#include <cstdint>

#include "sfl/dataset.hpp"
#include "sfl/layer.hpp"
#include "sfl/model_spec.hpp"
#include "sfl/sgd.hpp"

namespace sfl {

enum class Side { Device, Server };

/// One side of a split model. `spec_digest` and `op_index` tie the half to
/// the architecture it was cut from so mismatched halves cannot be joined.
template <typename T>
struct ModelHalf {
  LayerStack<T> layers;
  Side side = Side::Device;
  std::size_t op_index = 0;
  std::uint64_t spec_digest = 0;
};

template <typename T>
struct PartitionedModel {
  ModelHalf<T> device;
  ModelHalf<T> server;
};

/// Splits `layers` (built from `spec`) so the device keeps [0, op_index).
/// Requires 0 < op_index < layers.size().
template <typename T>
PartitionedModel<T> partition(const ModelSpec& spec, const LayerStack<T>& layers, PartitionPoint point);

/// Inverse of partition; throws ContractError for halves of different models.
template <typename T>
LayerStack<T> concat_weights(const ModelHalf<T>& device, const ModelHalf<T>& server);

/// Per-sample activation shape at the offloading point.
Shape device_output_shape(const ModelSpec& spec, PartitionPoint point);

/// Flatten + Dense(num_classes) head used by local-loss training on the device.
template <typename T>
LayerStack<T> make_auxiliary_head(const Shape& device_output, std::size_t num_classes, std::uint64_t seed);

struct PretrainOptions {
  std::size_t epochs = 3;
  std::size_t batch_size = 32;
  SgdState sgd{};
  std::uint64_t seed = 0;
};

/// Centrally trains the full model on a dataset tagged Pretrain and returns
/// its device half with every layer frozen. epochs = 0 yields the seeded
/// random initialization, frozen.
ModelHalf<float> pretrain_device_side(const ModelSpec& spec, PartitionPoint point, const Dataset& pretrain,
                                      const PretrainOptions& options);

}  // namespace sfl
