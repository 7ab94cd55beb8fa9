#include "sfl/idx.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "byte_io.hpp"

namespace sfl {

namespace {

std::uint32_t read_be(std::span<const std::uint8_t> b, std::size_t offset) {
  return (std::uint32_t{b[offset]} << 24) | (std::uint32_t{b[offset + 1]} << 16) | (std::uint32_t{b[offset + 2]} << 8) |
         b[offset + 3];
}

}  // namespace

Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels) {
  if (images.size() < 4 || read_be(images, 0) != kIdxImagesMagic) {
    throw IdxMagicError("IDX images: bad magic (expected 0x00000803)");
  }
  if (labels.size() < 4 || read_be(labels, 0) != kIdxLabelsMagic) {
    throw IdxMagicError("IDX labels: bad magic (expected 0x00000801)");
  }
  if (images.size() < 16) throw IdxTruncatedError("IDX images: header truncated");
  if (labels.size() < 8) throw IdxTruncatedError("IDX labels: header truncated");
  const std::size_t n = read_be(images, 4), rows = read_be(images, 8), cols = read_be(images, 12);
  const std::size_t n_labels = read_be(labels, 4);
  if (n != n_labels) {
    throw IdxCountMismatchError("IDX: " + std::to_string(n) + " images but " + std::to_string(n_labels) + " labels");
  }
  if (rows == 0 || cols == 0) throw IdxTruncatedError("IDX images: zero image dimension");
  const std::size_t per = rows * cols;
  if (images.size() - 16 < n * per) {
    throw IdxTruncatedError("IDX images: payload truncated (" + std::to_string(images.size() - 16) + " of " +
                            std::to_string(n * per) + " bytes)");
  }
  if (labels.size() - 8 < n) {
    throw IdxTruncatedError("IDX labels: payload truncated (" + std::to_string(labels.size() - 8) + " of " +
                            std::to_string(n) + " bytes)");
  }
  Dataset ds;
  if (n == 0) return ds;
  ds.images = Tensor({n, 1, rows, cols});
  for (std::size_t i = 0; i < n * per; ++i) ds.images[i] = static_cast<float>(images[16 + i]) / 255.0f;
  ds.labels.assign(labels.begin() + 8, labels.begin() + 8 + static_cast<long>(n));
  ds.num_classes = static_cast<std::size_t>(*std::max_element(ds.labels.begin(), ds.labels.end())) + 1;
  ds.origin.resize(n);
  std::iota(ds.origin.begin(), ds.origin.end(), std::size_t{0});
  return ds;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  return parse_idx(detail::read_file(images_path), detail::read_file(labels_path));
}

std::vector<std::uint8_t> encode_idx_images(const Dataset& ds) {
  if (ds.size() > 0 && (ds.images.rank() != 4 || ds.images.dim(1) != 1)) {
    throw ShapeError("IDX images: only (N, 1, H, W) datasets can be written, got " + to_string(ds.images.shape()));
  }
  detail::ByteWriter w;
  w.u32_be(kIdxImagesMagic);
  w.u32_be(static_cast<std::uint32_t>(ds.size()));
  w.u32_be(ds.size() ? static_cast<std::uint32_t>(ds.images.dim(2)) : 0);
  w.u32_be(ds.size() ? static_cast<std::uint32_t>(ds.images.dim(3)) : 0);
  for (float v : ds.images.data()) {
    w.u8(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
  }
  return w.take();
}

std::vector<std::uint8_t> encode_idx_labels(const Dataset& ds) {
  detail::ByteWriter w;
  w.u32_be(kIdxLabelsMagic);
  w.u32_be(static_cast<std::uint32_t>(ds.size()));
  for (Label l : ds.labels) {
    if (l > 255) throw ShapeError("IDX labels: label " + std::to_string(l) + " does not fit in a byte");
    w.u8(static_cast<std::uint8_t>(l));
  }
  return w.take();
}

void write_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path) {
  detail::write_file(images_path, encode_idx_images(ds));
  detail::write_file(labels_path, encode_idx_labels(ds));
}

}  // namespace sfl
