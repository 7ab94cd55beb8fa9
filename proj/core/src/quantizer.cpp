#include "sfl/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "byte_io.hpp"

namespace sfl {

namespace {

constexpr char kMagic[4] = {'Q', 'A', 'C', 'T'};
constexpr std::size_t kFixedHeader = 4 + 4 + 2 + 4 + 1 + 4 + 4 + 4;

template <typename T>
std::vector<double> flat_gradient(const Gradients<T>& g) {
  std::vector<double> out;
  for (const auto& layer : g.params) {
    for (const auto& p : layer) out.insert(out.end(), p.data().begin(), p.data().end());
  }
  return out;
}

}  // namespace

template <typename T>
QuantizedActivation quantize(const BasicTensor<T>& a) {
  if (a.empty()) throw ContractError("quantize: empty tensor");
  if (!a.all_finite()) throw ContractError("quantize: tensor contains NaN or Inf");
  const auto [lo_it, hi_it] = std::minmax_element(a.data().begin(), a.data().end());
  QuantizedActivation z;
  z.shape = a.shape();
  z.min_val = static_cast<float>(*lo_it);
  z.payload.assign(a.size(), 0);
  const double lo = z.min_val;
  const double range = static_cast<double>(*hi_it) - lo;
  if (!(range > 0.0)) return z;
  z.scale = std::max(static_cast<float>(range / 255.0), std::numeric_limits<float>::denorm_min());
  const double scale = z.scale;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double q = std::round((static_cast<double>(a[i]) - lo) / scale);
    z.payload[i] = static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
  }
  return z;
}

template <typename T>
BasicTensor<T> dequantize(const QuantizedActivation& z) {
  if (z.shape.empty() || z.payload.size() != element_count(z.shape)) {
    throw ShapeError("dequantize: payload length " + std::to_string(z.payload.size()) + " does not match shape " +
                     to_string(z.shape));
  }
  BasicTensor<T> out(z.shape);
  const double lo = z.min_val, scale = z.scale;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(lo + scale * z.payload[i]);
  return out;
}

std::size_t qact_record_size(std::size_t rank, std::size_t elements, std::size_t labels) {
  return kFixedHeader + 4 * rank + 2 * labels + elements;
}

std::vector<std::uint8_t> serialize(const QuantizedActivation& z) {
  if (z.shape.size() > 255) throw ShapeError("serialize: rank exceeds 255");
  if (z.payload.size() != element_count(z.shape)) throw ShapeError("serialize: payload/shape mismatch");
  detail::ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(z.round_tag);
  w.u16(z.device_id);
  w.u32(z.batch_index);
  w.u8(static_cast<std::uint8_t>(z.shape.size()));
  for (std::size_t d : z.shape) w.u32(static_cast<std::uint32_t>(d));
  w.f32(z.scale);
  w.f32(z.min_val);
  w.u32(static_cast<std::uint32_t>(z.labels.size()));
  for (Label l : z.labels) w.u16(l);
  w.bytes(z.payload.data(), z.payload.size());
  return w.take();
}

QuantizedActivation deserialize_qact(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "QACT record");
  if (std::memcmp(r.bytes(4).data(), kMagic, 4) != 0) throw FormatError("QACT record: bad magic");
  QuantizedActivation z;
  z.round_tag = r.u32();
  z.device_id = r.u16();
  z.batch_index = r.u32();
  const std::uint8_t rank = r.u8();
  if (rank == 0) throw FormatError("QACT record: rank 0");
  z.shape.resize(rank);
  for (auto& d : z.shape) {
    d = r.u32();
    if (d == 0) throw FormatError("QACT record: zero dimension");
  }
  z.scale = r.f32();
  z.min_val = r.f32();
  if (!(z.scale >= 0.0f) || !std::isfinite(z.scale) || !std::isfinite(z.min_val)) {
    throw FormatError("QACT record: invalid affine parameters");
  }
  const std::uint32_t n_labels = r.u32();
  if (n_labels > r.remaining() / 2) throw FormatError("QACT record: truncated labels");
  z.labels.resize(n_labels);
  for (auto& l : z.labels) l = r.u16();
  const std::size_t n = element_count(z.shape);
  if (r.remaining() != n) {
    throw FormatError("QACT record: payload has " + std::to_string(r.remaining()) + " bytes, shape needs " +
                      std::to_string(n));
  }
  const auto payload = r.bytes(n);
  z.payload.assign(payload.begin(), payload.end());
  return z;
}

template <typename T>
QuantizationError quantization_error(const BasicTensor<T>& activation, std::span<const Label> labels,
                                     const LayerStack<T>& server, bool enabled) {
  if (!enabled) return {};
  const BasicTensor<T> restored = dequantize<T>(quantize(activation));

  const auto trace_exact = forward(server, activation);
  const auto loss_exact = softmax_cross_entropy(trace_exact.output(), labels);
  const auto grad_exact = flat_gradient(backward(server, trace_exact, loss_exact.grad));

  const auto trace_q = forward(server, restored);
  const auto loss_q = softmax_cross_entropy(trace_q.output(), labels);
  const auto grad_q = flat_gradient(backward(server, trace_q, loss_q.grad));

  double sq = 0.0;
  for (std::size_t i = 0; i < grad_exact.size(); ++i) {
    const double d = grad_q[i] - grad_exact[i];
    sq += d * d;
  }
  return {std::sqrt(sq), static_cast<double>(loss_q.loss) - static_cast<double>(loss_exact.loss)};
}

template QuantizedActivation quantize<float>(const BasicTensor<float>&);
template QuantizedActivation quantize<double>(const BasicTensor<double>&);
template BasicTensor<float> dequantize<float>(const QuantizedActivation&);
template BasicTensor<double> dequantize<double>(const QuantizedActivation&);
template QuantizationError quantization_error<float>(const BasicTensor<float>&, std::span<const Label>,
                                                     const LayerStack<float>&, bool);
template QuantizationError quantization_error<double>(const BasicTensor<double>&, std::span<const Label>,
                                                      const LayerStack<double>&, bool);

}  // namespace sfl
