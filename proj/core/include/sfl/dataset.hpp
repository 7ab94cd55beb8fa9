#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "sfl/loss.hpp"
#include "sfl/tensor.hpp"

namespace sfl {

enum class SplitTag { Unsplit, Pretrain, Train, Test };

/// Labeled images, (N, C, H, W). `origin[i]` is the index of sample i in the
/// pool it was split from, which makes split disjointness checkable.
struct Dataset {
  Tensor images;
  std::vector<Label> labels;
  std::size_t num_classes = 0;
  SplitTag tag = SplitTag::Unsplit;
  std::vector<std::size_t> origin;

  std::size_t size() const { return labels.size(); }
  Shape sample_shape() const;
};

/// Class-conditional Gaussian templates: each class draws a uniform [0,1]
/// template image; samples are template + N(0, sigma^2) noise, classes
/// interleaved. Deterministic in `seed`.
Dataset generate_blobs(std::size_t classes, std::size_t per_class, const Shape& image_shape, double sigma,
                       std::uint64_t seed);

struct DataSplits {
  Dataset pretrain;
  Dataset train;
  Dataset test;
};

/// Seeded shuffle, then the first fractions go to pretrain and test and the
/// remainder to train. The three parts are disjoint by origin index.
DataSplits split_dataset(const Dataset& pool, double pretrain_fraction, double test_fraction, std::uint64_t seed);

Dataset subset(const Dataset& ds, std::span<const std::size_t> indices, SplitTag tag);

bool disjoint(const Dataset& a, const Dataset& b);

Tensor gather_images(const Dataset& ds, std::span<const std::size_t> indices);
std::vector<Label> gather_labels(const Dataset& ds, std::span<const std::size_t> indices);

struct Shard {
  std::uint16_t device_id = 0;
  std::vector<std::size_t> indices;
};

/// Seeded shuffle of [0, n) dealt into k contiguous shards whose sizes differ
/// by at most one.
std::vector<Shard> shard_uniform(std::size_t n, std::size_t k, std::uint64_t seed);

/// Fixed batch partition of a shard, in shard order; the last batch may be short.
std::vector<std::vector<std::size_t>> make_batches(const Shard& shard, std::size_t batch_size);

/// Mirrors each image on the width axis independently with probability p.
template <typename T>
void augment_hflip(BasicTensor<T>& batch, double p, std::mt19937_64& rng);

}  // namespace sfl
