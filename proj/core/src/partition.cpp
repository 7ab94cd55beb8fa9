#include "sfl/partition.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "sfl/loss.hpp"

namespace sfl {

template <typename T>
PartitionedModel<T> partition(const ModelSpec& spec, const LayerStack<T>& layers, PartitionPoint point) {
  if (point.op_index == 0 || point.op_index >= layers.size()) {
    throw ContractError("partition: offloading point " + std::to_string(point.op_index) + " outside (0, " +
                        std::to_string(layers.size()) + ")");
  }
  const std::uint64_t digest = spec_digest(spec);
  PartitionedModel<T> pm;
  pm.device = {LayerStack<T>(layers.begin(), layers.begin() + static_cast<long>(point.op_index)), Side::Device,
               point.op_index, digest};
  pm.server = {LayerStack<T>(layers.begin() + static_cast<long>(point.op_index), layers.end()), Side::Server,
               point.op_index, digest};
  return pm;
}

template <typename T>
LayerStack<T> concat_weights(const ModelHalf<T>& device, const ModelHalf<T>& server) {
  if (device.side != Side::Device || server.side != Side::Server) {
    throw ContractError("concat_weights: expected a device half followed by a server half");
  }
  if (device.spec_digest != server.spec_digest) {
    throw ContractError("concat_weights: halves come from different model specs");
  }
  if (device.op_index != server.op_index || device.layers.size() != device.op_index) {
    throw ContractError("concat_weights: halves were cut at different offloading points");
  }
  LayerStack<T> full = device.layers;
  full.insert(full.end(), server.layers.begin(), server.layers.end());
  return full;
}

Shape device_output_shape(const ModelSpec& spec, PartitionPoint point) {
  const auto layers = build_model_uninitialized<float>(spec);
  if (point.op_index == 0 || point.op_index >= layers.size()) {
    throw ContractError("offloading point " + std::to_string(point.op_index) + " outside (0, " +
                        std::to_string(layers.size()) + ")");
  }
  const LayerStack<float> device(layers.begin(), layers.begin() + static_cast<long>(point.op_index));
  return output_shape(device, spec.input_shape);
}

template <typename T>
LayerStack<T> make_auxiliary_head(const Shape& device_output, std::size_t num_classes, std::uint64_t seed) {
  LayerStack<T> head{Layer<T>::flatten(), Layer<T>::dense(element_count(device_output), num_classes)};
  init_uniform(head, seed);
  return head;
}

ModelHalf<float> pretrain_device_side(const ModelSpec& spec, PartitionPoint point, const Dataset& pretrain,
                                      const PretrainOptions& options) {
  if (pretrain.tag != SplitTag::Pretrain) {
    throw ContractError("pretrain_device_side: dataset is not the held-out pretrain split");
  }
  if (pretrain.size() == 0) throw ContractError("pretrain_device_side: pretrain split is empty");
  options.sgd.validate();

  LayerStack<float> model = build_model<float>(spec, options.seed);
  std::vector<std::size_t> order(pretrain.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double eta = options.sgd.rate_at(epoch);
    for (std::size_t i = 0; i < order.size(); i += options.batch_size) {
      const std::span<const std::size_t> idx(order.data() + i, std::min(options.batch_size, order.size() - i));
      const Tensor x = gather_images(pretrain, idx);
      const auto labels = gather_labels(pretrain, idx);
      const auto trace = forward(model, x);
      const auto loss = softmax_cross_entropy(trace.output(), labels);
      sgd_step(model, backward(model, trace, loss.grad), eta);
    }
  }
  auto halves = partition(spec, model, point);
  freeze(halves.device.layers);
  return std::move(halves.device);
}

template PartitionedModel<float> partition<float>(const ModelSpec&, const LayerStack<float>&, PartitionPoint);
template PartitionedModel<double> partition<double>(const ModelSpec&, const LayerStack<double>&, PartitionPoint);
template LayerStack<float> concat_weights<float>(const ModelHalf<float>&, const ModelHalf<float>&);
template LayerStack<double> concat_weights<double>(const ModelHalf<double>&, const ModelHalf<double>&);
template LayerStack<float> make_auxiliary_head<float>(const Shape&, std::size_t, std::uint64_t);
template LayerStack<double> make_auxiliary_head<double>(const Shape&, std::size_t, std::uint64_t);

}  // namespace sfl
