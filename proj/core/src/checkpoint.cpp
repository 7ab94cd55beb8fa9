#include "sfl/checkpoint.hpp"

#include <cstring>

#include "byte_io.hpp"

namespace sfl {

namespace {
constexpr char kMagic[4] = {'S', 'F', 'L', '1'};
}

std::vector<std::uint8_t> encode_checkpoint(const LayerStack<float>& layers) {
  detail::ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(static_cast<std::uint32_t>(layers.size()));
  for (const auto& l : layers) {
    w.u8(static_cast<std::uint8_t>(l.kind));
    for (const auto& p : l.params) {
      w.u32(static_cast<std::uint32_t>(p.rank()));
      for (std::size_t d : p.shape()) w.u32(static_cast<std::uint32_t>(d));
      for (float v : p.data()) w.f32(v);
    }
  }
  return w.take();
}

LayerStack<float> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "checkpoint");
  if (std::memcmp(r.bytes(4).data(), kMagic, 4) != 0) throw FormatError("checkpoint: bad magic (expected SFL1)");
  const std::uint32_t count = r.u32();
  LayerStack<float> layers;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint8_t tag = r.u8();
    if (tag < 1 || tag > 7) throw FormatError("checkpoint: layer " + std::to_string(i) + " has unknown kind tag " + std::to_string(tag));
    Layer<float> l;
    l.kind = static_cast<LayerKind>(tag);
    for (std::size_t p = 0; p < param_tensor_count(l.kind); ++p) {
      const std::uint32_t rank = r.u32();
      if (rank == 0 || rank > 4) throw FormatError("checkpoint: layer " + std::to_string(i) + " has parameter rank " + std::to_string(rank));
      Shape shape(rank);
      for (auto& d : shape) d = r.u32();
      if (element_count(shape) > r.remaining() / 4) {
        throw FormatError("checkpoint: layer " + std::to_string(i) + " payload truncated");
      }
      try {
        BasicTensor<float> t(shape);
        for (auto& v : t.data()) v = r.f32();
        l.params.push_back(std::move(t));
      } catch (const ShapeError& e) {
        throw FormatError("checkpoint: layer " + std::to_string(i) + ": " + e.what());
      }
    }
    layers.push_back(std::move(l));
  }
  if (!r.at_end()) throw FormatError("checkpoint: trailing bytes after last layer");
  return layers;
}

void save_checkpoint(const std::string& path, const LayerStack<float>& layers) {
  detail::write_file(path, encode_checkpoint(layers));
}

LayerStack<float> load_checkpoint(const std::string& path) {
  return decode_checkpoint(detail::read_file(path));
}

}  // namespace sfl
