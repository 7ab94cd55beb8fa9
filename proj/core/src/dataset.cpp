#include "sfl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace sfl {

Shape Dataset::sample_shape() const {
  if (images.empty()) return {};
  return Shape(images.shape().begin() + 1, images.shape().end());
}

Dataset generate_blobs(std::size_t classes, std::size_t per_class, const Shape& image_shape, double sigma,
                       std::uint64_t seed) {
  if (classes == 0 || per_class == 0) throw ConfigError("generate_blobs: need at least one class and one sample per class");
  if (classes > 65536) throw ConfigError("generate_blobs: too many classes for 16-bit labels");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("generate_blobs: noise sigma must be finite and >= 0");
  const std::size_t per_image = element_count(image_shape);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<std::vector<double>> templates(classes, std::vector<double>(per_image));
  for (auto& t : templates) {
    for (auto& v : t) v = uni(rng);
  }

  const std::size_t n = classes * per_class;
  Shape shape{n};
  shape.insert(shape.end(), image_shape.begin(), image_shape.end());
  Dataset ds;
  ds.images = Tensor(shape);
  ds.num_classes = classes;
  ds.labels.resize(n);
  ds.origin.resize(n);
  std::iota(ds.origin.begin(), ds.origin.end(), std::size_t{0});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % classes;
    ds.labels[i] = static_cast<Label>(c);
    float* dst = ds.images.data().data() + i * per_image;
    for (std::size_t j = 0; j < per_image; ++j) {
      const double jitter = sigma > 0.0 ? sigma * noise(rng) : 0.0;
      dst[j] = static_cast<float>(templates[c][j] + jitter);
    }
  }
  return ds;
}

Dataset subset(const Dataset& ds, std::span<const std::size_t> indices, SplitTag tag) {
  Dataset out;
  out.num_classes = ds.num_classes;
  out.tag = tag;
  if (indices.empty()) return out;
  out.images = gather_images(ds, indices);
  out.labels = gather_labels(ds, indices);
  out.origin.reserve(indices.size());
  for (std::size_t i : indices) out.origin.push_back(ds.origin.empty() ? i : ds.origin[i]);
  return out;
}

DataSplits split_dataset(const Dataset& pool, double pretrain_fraction, double test_fraction, std::uint64_t seed) {
  if (pretrain_fraction < 0 || test_fraction < 0 || pretrain_fraction + test_fraction >= 1.0) {
    throw ConfigError("split_dataset: fractions must be >= 0 and leave a nonempty train split");
  }
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n = static_cast<double>(pool.size());
  const auto n_pre = static_cast<std::size_t>(std::floor(n * pretrain_fraction));
  const auto n_test = static_cast<std::size_t>(std::floor(n * test_fraction));
  std::span<const std::size_t> all(order);
  DataSplits s;
  s.pretrain = subset(pool, all.subspan(0, n_pre), SplitTag::Pretrain);
  s.test = subset(pool, all.subspan(n_pre, n_test), SplitTag::Test);
  s.train = subset(pool, all.subspan(n_pre + n_test), SplitTag::Train);
  return s;
}

bool disjoint(const Dataset& a, const Dataset& b) {
  std::unordered_set<std::size_t> seen(a.origin.begin(), a.origin.end());
  return std::none_of(b.origin.begin(), b.origin.end(), [&](std::size_t i) { return seen.count(i) > 0; });
}

Tensor gather_images(const Dataset& ds, std::span<const std::size_t> indices) {
  const std::size_t per = ds.images.inner_size();
  Shape shape = ds.images.shape();
  shape[0] = indices.size();
  Tensor out(shape);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= ds.size()) throw ContractError("gather_images: index out of range");
    const float* src = ds.images.data().data() + indices[i] * per;
    std::copy(src, src + per, out.data().data() + i * per);
  }
  return out;
}

std::vector<Label> gather_labels(const Dataset& ds, std::span<const std::size_t> indices) {
  std::vector<Label> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= ds.size()) throw ContractError("gather_labels: index out of range");
    out.push_back(ds.labels[i]);
  }
  return out;
}

std::vector<Shard> shard_uniform(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw ConfigError("shard_uniform: need at least one device");
  if (k > 65536) throw ConfigError("shard_uniform: device ids are 16-bit");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Shard> shards(k);
  const std::size_t base = n / k, extra = n % k;
  std::size_t pos = 0;
  for (std::size_t d = 0; d < k; ++d) {
    const std::size_t len = base + (d < extra ? 1 : 0);
    shards[d].device_id = static_cast<std::uint16_t>(d);
    shards[d].indices.assign(order.begin() + static_cast<long>(pos), order.begin() + static_cast<long>(pos + len));
    pos += len;
  }
  return shards;
}

std::vector<std::vector<std::size_t>> make_batches(const Shard& shard, std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < shard.indices.size(); i += batch_size) {
    const std::size_t end = std::min(i + batch_size, shard.indices.size());
    batches.emplace_back(shard.indices.begin() + static_cast<long>(i), shard.indices.begin() + static_cast<long>(end));
  }
  return batches;
}

template <typename T>
void augment_hflip(BasicTensor<T>& batch, double p, std::mt19937_64& rng) {
  if (batch.rank() != 4) throw ShapeError("augment_hflip: expects (N, C, H, W), got " + to_string(batch.shape()));
  std::bernoulli_distribution coin(p);
  const std::size_t n = batch.dim(0), planes = batch.dim(1) * batch.dim(2), w = batch.dim(3);
  for (std::size_t s = 0; s < n; ++s) {
    if (!coin(rng)) continue;
    T* img = batch.data().data() + s * planes * w;
    for (std::size_t r = 0; r < planes; ++r) std::reverse(img + r * w, img + (r + 1) * w);
  }
}

template void augment_hflip<float>(BasicTensor<float>&, double, std::mt19937_64&);
template void augment_hflip<double>(BasicTensor<double>&, double, std::mt19937_64&);

}  // namespace sfl
