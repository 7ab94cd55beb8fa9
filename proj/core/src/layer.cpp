#include "sfl/layer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

namespace sfl {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Dense: return "Dense";
    case LayerKind::Conv3x3: return "Conv3x3";
    case LayerKind::Conv1x1: return "Conv1x1";
    case LayerKind::MaxPool2x2: return "MaxPool2x2";
    case LayerKind::ReLU: return "ReLU";
    case LayerKind::Flatten: return "Flatten";
    case LayerKind::ResidualBlock: return "ResidualBlock";
  }
  return "Unknown";
}

std::size_t param_tensor_count(LayerKind kind) {
  switch (kind) {
    case LayerKind::Dense:
    case LayerKind::Conv3x3:
    case LayerKind::Conv1x1: return 2;
    case LayerKind::ResidualBlock: return 6;
    default: return 0;
  }
}

namespace {

// ---------------------------------------------------------------------------
// Kernels. All tensors are batch-major: images (N, C, H, W), vectors (N, F).

template <typename T>
BasicTensor<T> conv_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b) {
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  const long pad = static_cast<long>(k / 2);
  BasicTensor<T> y({n, cout, h, wd});
  const T* xp = x.data().data();
  const T* wp = w.data().data();
  T* yp = y.data().data();
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t o = 0; o < cout; ++o) {
      T* yo = yp + ((s * cout + o) * h) * wd;
      std::fill(yo, yo + h * wd, b[o]);
      for (std::size_t c = 0; c < cin; ++c) {
        const T* xc = xp + ((s * cin + c) * h) * wd;
        for (std::size_t kh = 0; kh < k; ++kh) {
          for (std::size_t kw = 0; kw < k; ++kw) {
            const T wv = wp[((o * cin + c) * k + kh) * k + kw];
            const long dy = static_cast<long>(kh) - pad;
            const long dx = static_cast<long>(kw) - pad;
            const long x0 = std::max(0L, -dx);
            const long x1 = std::min(static_cast<long>(wd), static_cast<long>(wd) - dx);
            for (long r = std::max(0L, -dy); r < std::min(static_cast<long>(h), static_cast<long>(h) - dy); ++r) {
              T* yrow = yo + r * static_cast<long>(wd);
              const T* xrow = xc + (r + dy) * static_cast<long>(wd) + dx;
              for (long col = x0; col < x1; ++col) yrow[col] += wv * xrow[col];
            }
          }
        }
      }
    }
  }
  return y;
}

template <typename T>
void conv_backward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& dy_t,
                   BasicTensor<T>& dx_t, BasicTensor<T>& dw_t, BasicTensor<T>& db_t) {
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  const long pad = static_cast<long>(k / 2);
  dx_t = BasicTensor<T>(x.shape());
  dw_t = BasicTensor<T>(w.shape());
  db_t = BasicTensor<T>({cout});
  const T* xp = x.data().data();
  const T* wp = w.data().data();
  const T* dyp = dy_t.data().data();
  T* dxp = dx_t.data().data();
  T* dwp = dw_t.data().data();
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t o = 0; o < cout; ++o) {
      const T* dyo = dyp + ((s * cout + o) * h) * wd;
      T acc{0};
      for (std::size_t i = 0; i < h * wd; ++i) acc += dyo[i];
      db_t[o] += acc;
      for (std::size_t c = 0; c < cin; ++c) {
        const T* xc = xp + ((s * cin + c) * h) * wd;
        T* dxc = dxp + ((s * cin + c) * h) * wd;
        for (std::size_t kh = 0; kh < k; ++kh) {
          for (std::size_t kw = 0; kw < k; ++kw) {
            const std::size_t widx = ((o * cin + c) * k + kh) * k + kw;
            const T wv = wp[widx];
            const long dr = static_cast<long>(kh) - pad;
            const long dc = static_cast<long>(kw) - pad;
            const long c0 = std::max(0L, -dc);
            const long c1 = std::min(static_cast<long>(wd), static_cast<long>(wd) - dc);
            T gw{0};
            for (long r = std::max(0L, -dr); r < std::min(static_cast<long>(h), static_cast<long>(h) - dr); ++r) {
              const T* dyrow = dyo + r * static_cast<long>(wd);
              const T* xrow = xc + (r + dr) * static_cast<long>(wd) + dc;
              T* dxrow = dxc + (r + dr) * static_cast<long>(wd) + dc;
              for (long col = c0; col < c1; ++col) {
                gw += dyrow[col] * xrow[col];
                dxrow[col] += dyrow[col] * wv;
              }
            }
            dwp[widx] += gw;
          }
        }
      }
    }
  }
}

template <typename T>
BasicTensor<T> pool_forward(const BasicTensor<T>& x) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  BasicTensor<T> y({n, c, oh, ow});
  for (std::size_t p = 0; p < n * c; ++p) {
    const T* xp = x.data().data() + p * h * w;
    T* yp = y.data().data() + p * oh * ow;
    for (std::size_t r = 0; r < oh; ++r) {
      for (std::size_t col = 0; col < ow; ++col) {
        const T* base = xp + (2 * r) * w + 2 * col;
        yp[r * ow + col] = std::max(std::max(base[0], base[1]), std::max(base[w], base[w + 1]));
      }
    }
  }
  return y;
}

// Routes each output gradient to the first maximal input of its window.
template <typename T>
BasicTensor<T> pool_backward(const BasicTensor<T>& x, const BasicTensor<T>& dy) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  BasicTensor<T> dx(x.shape());
  for (std::size_t p = 0; p < n * c; ++p) {
    const T* xp = x.data().data() + p * h * w;
    const T* dyp = dy.data().data() + p * oh * ow;
    T* dxp = dx.data().data() + p * h * w;
    for (std::size_t r = 0; r < oh; ++r) {
      for (std::size_t col = 0; col < ow; ++col) {
        const std::size_t cand[4] = {(2 * r) * w + 2 * col, (2 * r) * w + 2 * col + 1,
                                     (2 * r + 1) * w + 2 * col, (2 * r + 1) * w + 2 * col + 1};
        std::size_t best = cand[0];
        for (std::size_t i = 1; i < 4; ++i) {
          if (xp[cand[i]] > xp[best]) best = cand[i];
        }
        dxp[best] += dyp[r * ow + col];
      }
    }
  }
  return dx;
}

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x) {
  BasicTensor<T> y = x;
  for (auto& v : y.data()) v = v > T{0} ? v : T{0};
  return y;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& dy) {
  BasicTensor<T> dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(x[i] > T{0})) dx[i] = T{0};
  }
  return dx;
}

template <typename T>
BasicTensor<T> dense_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b) {
  const std::size_t n = x.dim(0), in = w.dim(0), out = w.dim(1);
  BasicTensor<T> y({n, out});
  for (std::size_t s = 0; s < n; ++s) {
    T* yr = y.data().data() + s * out;
    std::copy(b.data().begin(), b.data().end(), yr);
    const T* xr = x.data().data() + s * in;
    for (std::size_t i = 0; i < in; ++i) {
      const T xv = xr[i];
      const T* wr = w.data().data() + i * out;
      for (std::size_t j = 0; j < out; ++j) yr[j] += xv * wr[j];
    }
  }
  return y;
}

template <typename T>
void dense_backward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& dy,
                    BasicTensor<T>& dx, BasicTensor<T>& dw, BasicTensor<T>& db) {
  const std::size_t n = x.dim(0), in = w.dim(0), out = w.dim(1);
  dx = BasicTensor<T>(x.shape());
  dw = BasicTensor<T>(w.shape());
  db = BasicTensor<T>({out});
  for (std::size_t s = 0; s < n; ++s) {
    const T* xr = x.data().data() + s * in;
    const T* dyr = dy.data().data() + s * out;
    T* dxr = dx.data().data() + s * in;
    for (std::size_t j = 0; j < out; ++j) db[j] += dyr[j];
    for (std::size_t i = 0; i < in; ++i) {
      const T* wr = w.data().data() + i * out;
      T* dwr = dw.data().data() + i * out;
      T acc{0};
      for (std::size_t j = 0; j < out; ++j) {
        dwr[j] += xr[i] * dyr[j];
        acc += wr[j] * dyr[j];
      }
      dxr[i] = acc;
    }
  }
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  BasicTensor<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

template <typename T>
struct ResidualCache {
  BasicTensor<T> h1, r1, h2, pooled_x, out;
};

template <typename T>
ResidualCache<T> residual_forward(const Layer<T>& layer, const BasicTensor<T>& x) {
  const auto& p = layer.params;
  ResidualCache<T> c;
  c.h1 = conv_forward(x, p[0], p[1]);
  c.r1 = relu_forward(c.h1);
  c.h2 = conv_forward(c.r1, p[2], p[3]);
  c.pooled_x = pool_forward(x);
  BasicTensor<T> skip = conv_forward(c.pooled_x, p[4], p[5]);
  c.out = relu_forward(add(pool_forward(c.h2), skip));
  return c;
}

template <typename T>
BasicTensor<T> forward_layer(const Layer<T>& layer, const BasicTensor<T>& x) {
  switch (layer.kind) {
    case LayerKind::Dense: return dense_forward(x, layer.params[0], layer.params[1]);
    case LayerKind::Conv3x3:
    case LayerKind::Conv1x1: return conv_forward(x, layer.params[0], layer.params[1]);
    case LayerKind::MaxPool2x2: return pool_forward(x);
    case LayerKind::ReLU: return relu_forward(x);
    case LayerKind::Flatten: return x.reshaped({x.dim(0), x.inner_size()});
    case LayerKind::ResidualBlock: return residual_forward(layer, x).out;
  }
  throw ContractError("unknown layer kind");
}

template <typename T>
BasicTensor<T> backward_layer(const Layer<T>& layer, const BasicTensor<T>& x, const BasicTensor<T>& dy,
                              std::vector<BasicTensor<T>>& grads) {
  switch (layer.kind) {
    case LayerKind::Dense: {
      grads.resize(2);
      BasicTensor<T> dx;
      dense_backward(x, layer.params[0], dy, dx, grads[0], grads[1]);
      return dx;
    }
    case LayerKind::Conv3x3:
    case LayerKind::Conv1x1: {
      grads.resize(2);
      BasicTensor<T> dx;
      conv_backward(x, layer.params[0], dy, dx, grads[0], grads[1]);
      return dx;
    }
    case LayerKind::MaxPool2x2: return pool_backward(x, dy);
    case LayerKind::ReLU: return relu_backward(x, dy);
    case LayerKind::Flatten: return dy.reshaped(x.shape());
    case LayerKind::ResidualBlock: {
      const auto& p = layer.params;
      const ResidualCache<T> c = residual_forward(layer, x);
      const BasicTensor<T> d_sum = relu_backward(c.out, dy);
      grads.resize(6);
      BasicTensor<T> d_pooled_x;
      conv_backward(c.pooled_x, p[4], d_sum, d_pooled_x, grads[4], grads[5]);
      BasicTensor<T> dx = pool_backward(x, d_pooled_x);
      const BasicTensor<T> dh2 = pool_backward(c.h2, d_sum);
      BasicTensor<T> dr1;
      conv_backward(c.r1, p[2], dh2, dr1, grads[2], grads[3]);
      const BasicTensor<T> dh1 = relu_backward(c.h1, dr1);
      BasicTensor<T> dx_main;
      conv_backward(x, p[0], dh1, dx_main, grads[0], grads[1]);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dx_main[i];
      return dx;
    }
  }
  throw ContractError("unknown layer kind");
}

std::uint64_t fnv_mix(std::uint64_t h, const void* bytes, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::size_t fan_in(const Shape& weight_shape, LayerKind kind) {
  if (kind == LayerKind::Dense) return weight_shape[0];
  return weight_shape[1] * weight_shape[2] * weight_shape[3];
}

[[noreturn]] void reject(const std::string& layer, const Shape& input, const std::string& why) {
  throw ShapeError(layer + " cannot accept input " + to_string(input) + ": " + why);
}

}  // namespace

// ---------------------------------------------------------------------------

template <typename T>
Layer<T> Layer<T>::dense(std::size_t in, std::size_t out) {
  Layer l;
  l.kind = LayerKind::Dense;
  l.params = {BasicTensor<T>({in, out}), BasicTensor<T>({out})};
  return l;
}

template <typename T>
Layer<T> Layer<T>::conv3x3(std::size_t in_ch, std::size_t out_ch) {
  Layer l;
  l.kind = LayerKind::Conv3x3;
  l.params = {BasicTensor<T>({out_ch, in_ch, 3, 3}), BasicTensor<T>({out_ch})};
  return l;
}

template <typename T>
Layer<T> Layer<T>::conv1x1(std::size_t in_ch, std::size_t out_ch) {
  Layer l;
  l.kind = LayerKind::Conv1x1;
  l.params = {BasicTensor<T>({out_ch, in_ch, 1, 1}), BasicTensor<T>({out_ch})};
  return l;
}

template <typename T>
Layer<T> Layer<T>::residual(std::size_t in_ch, std::size_t width) {
  Layer l;
  l.kind = LayerKind::ResidualBlock;
  l.params = {BasicTensor<T>({width, in_ch, 3, 3}), BasicTensor<T>({width}),
              BasicTensor<T>({width, width, 3, 3}), BasicTensor<T>({width}),
              BasicTensor<T>({width, in_ch, 1, 1}), BasicTensor<T>({width})};
  return l;
}

template <typename T>
Layer<T> Layer<T>::max_pool() {
  Layer l;
  l.kind = LayerKind::MaxPool2x2;
  return l;
}

template <typename T>
Layer<T> Layer<T>::relu() {
  Layer l;
  l.kind = LayerKind::ReLU;
  return l;
}

template <typename T>
Layer<T> Layer<T>::flatten() {
  Layer l;
  l.kind = LayerKind::Flatten;
  return l;
}

template <typename T>
std::size_t Layer<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.size();
  return n;
}

template <typename T>
Shape output_shape(const Layer<T>& layer, const Shape& in) {
  const std::string name(to_string(layer.kind));
  switch (layer.kind) {
    case LayerKind::Dense: {
      if (in.size() != 1) reject(name, in, "expects a flat feature vector");
      if (in[0] != layer.params[0].dim(0)) reject(name, in, "expects " + std::to_string(layer.params[0].dim(0)) + " features");
      return {layer.params[0].dim(1)};
    }
    case LayerKind::Conv3x3:
    case LayerKind::Conv1x1:
    case LayerKind::ResidualBlock: {
      if (in.size() != 3) reject(name, in, "expects (channels, height, width)");
      const auto& w = layer.params[0];
      if (in[0] != w.dim(1)) reject(name, in, "expects " + std::to_string(w.dim(1)) + " channels");
      if (layer.kind != LayerKind::ResidualBlock) return {w.dim(0), in[1], in[2]};
      if (in[1] < 2 || in[2] < 2) reject(name, in, "spatial size too small to pool");
      return {w.dim(0), in[1] / 2, in[2] / 2};
    }
    case LayerKind::MaxPool2x2: {
      if (in.size() != 3) reject(name, in, "expects (channels, height, width)");
      if (in[1] < 2 || in[2] < 2) reject(name, in, "spatial size too small to pool");
      return {in[0], in[1] / 2, in[2] / 2};
    }
    case LayerKind::ReLU: return in;
    case LayerKind::Flatten: return {element_count(in)};
  }
  throw ContractError("unknown layer kind");
}

template <typename T>
Shape output_shape(const LayerStack<T>& layers, const Shape& input) {
  Shape s = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    try {
      s = output_shape(layers[i], s);
    } catch (const ShapeError& e) {
      throw ShapeError("layer " + std::to_string(i) + ": " + e.what());
    }
  }
  return s;
}

template <typename T>
std::size_t parameter_count(const LayerStack<T>& layers) {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.parameter_count();
  return n;
}

template <typename T>
std::uint64_t forward_macs(const Layer<T>& l, const Shape& s) {
  const Shape out = output_shape(l, s);
  switch (l.kind) {
    case LayerKind::Dense: return static_cast<std::uint64_t>(s[0]) * out[0];
    case LayerKind::Conv3x3: return static_cast<std::uint64_t>(s[1]) * s[2] * out[0] * s[0] * 9;
    case LayerKind::Conv1x1: return static_cast<std::uint64_t>(s[1]) * s[2] * out[0] * s[0];
    case LayerKind::ResidualBlock: {
      const std::uint64_t hw = static_cast<std::uint64_t>(s[1]) * s[2];
      const std::uint64_t width = out[0];
      return hw * width * s[0] * 9                                      // conv1
             + hw * width * width * 9                                   // conv2
             + static_cast<std::uint64_t>(out[1]) * out[2] * width * s[0];  // downsample, pooled input
    }
    default: return 0;
  }
}

template <typename T>
std::uint64_t forward_macs(const LayerStack<T>& layers, const Shape& input) {
  std::uint64_t macs = 0;
  Shape s = input;
  for (const auto& l : layers) {
    macs += forward_macs(l, s);
    s = output_shape(l, s);
  }
  return macs;
}

template <typename T>
void init_uniform(LayerStack<T>& layers, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& l : layers) {
    for (std::size_t i = 0; i + 1 < l.params.size(); i += 2) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in(l.params[i].shape(), l.kind)));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& v : l.params[i].data()) v = static_cast<T>(dist(rng));
      for (auto& v : l.params[i + 1].data()) v = static_cast<T>(dist(rng));
    }
  }
}

template <typename T>
std::uint64_t weights_digest(const LayerStack<T>& layers) {
  std::uint64_t h = 14695981039346656037ULL;
  for (const auto& l : layers) {
    const auto tag = static_cast<std::uint8_t>(l.kind);
    h = fnv_mix(h, &tag, 1);
    for (const auto& p : l.params) {
      for (std::size_t d : p.shape()) h = fnv_mix(h, &d, sizeof d);
      h = fnv_mix(h, p.data().data(), p.size() * sizeof(T));
    }
  }
  return h;
}

template <typename T>
Trace<T> forward(const LayerStack<T>& layers, const BasicTensor<T>& batch) {
  if (batch.rank() < 2) throw ShapeError("forward: batch must have a leading batch axis, got " + to_string(batch.shape()));
  const Shape sample(batch.shape().begin() + 1, batch.shape().end());
  output_shape(layers, sample);
  Trace<T> trace;
  trace.boundaries.reserve(layers.size() + 1);
  trace.boundaries.push_back(batch);
  for (const auto& l : layers) trace.boundaries.push_back(forward_layer(l, trace.boundaries.back()));
  trace.digest = weights_digest(layers);
  return trace;
}

template <typename T>
BasicTensor<T> predict(const LayerStack<T>& layers, const BasicTensor<T>& batch) {
  if (batch.rank() < 2) throw ShapeError("predict: batch must have a leading batch axis, got " + to_string(batch.shape()));
  const Shape sample(batch.shape().begin() + 1, batch.shape().end());
  output_shape(layers, sample);
  BasicTensor<T> x = batch;
  for (const auto& l : layers) x = forward_layer(l, x);
  return x;
}

template <typename T>
Gradients<T> backward(const LayerStack<T>& layers, const Trace<T>& trace, const BasicTensor<T>& loss_grad) {
  if (trace.boundaries.size() != layers.size() + 1) {
    throw ContractError("backward: trace has " + std::to_string(trace.boundaries.size()) +
                        " boundaries for a stack of " + std::to_string(layers.size()) + " layers");
  }
  if (trace.digest != weights_digest(layers)) {
    throw ContractError("backward: trace is stale (weights changed since forward)");
  }
  if (loss_grad.shape() != trace.output().shape()) {
    throw ShapeError("backward: loss gradient shape " + to_string(loss_grad.shape()) +
                     " differs from output shape " + to_string(trace.output().shape()));
  }
  Gradients<T> g;
  g.params.resize(layers.size());
  BasicTensor<T> d = loss_grad;
  for (std::size_t i = layers.size(); i-- > 0;) {
    d = backward_layer(layers[i], trace.boundaries[i], d, g.params[i]);
  }
  g.input = std::move(d);
  return g;
}

#define SFL_INSTANTIATE_LAYER(T)                                                               \
  template struct Layer<T>;                                                                    \
  template Shape output_shape<T>(const Layer<T>&, const Shape&);                               \
  template Shape output_shape<T>(const LayerStack<T>&, const Shape&);                          \
  template std::size_t parameter_count<T>(const LayerStack<T>&);                               \
  template std::uint64_t forward_macs<T>(const Layer<T>&, const Shape&);                       \
  template std::uint64_t forward_macs<T>(const LayerStack<T>&, const Shape&);                  \
  template void init_uniform<T>(LayerStack<T>&, std::uint64_t);                                \
  template std::uint64_t weights_digest<T>(const LayerStack<T>&);                              \
  template Trace<T> forward<T>(const LayerStack<T>&, const BasicTensor<T>&);                   \
  template BasicTensor<T> predict<T>(const LayerStack<T>&, const BasicTensor<T>&);             \
  template Gradients<T> backward<T>(const LayerStack<T>&, const Trace<T>&, const BasicTensor<T>&);

SFL_INSTANTIATE_LAYER(float)
SFL_INSTANTIATE_LAYER(double)

}  // namespace sfl
