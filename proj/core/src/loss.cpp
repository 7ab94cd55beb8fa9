#include "sfl/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sfl {

template <typename T>
LossResult<T> softmax_cross_entropy(const BasicTensor<T>& logits, std::span<const Label> labels) {
  if (logits.rank() != 2) throw ShapeError("softmax_cross_entropy: logits must be (N, C), got " + to_string(logits.shape()));
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != n) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) + " rows");
  }
  LossResult<T> r;
  r.grad = BasicTensor<T>(logits.shape());
  double total = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    if (labels[s] >= c) {
      throw ContractError("softmax_cross_entropy: label " + std::to_string(labels[s]) + " outside [0, " + std::to_string(c) + ")");
    }
    const T* row = logits.data().data() + s * c;
    T* g = r.grad.data().data() + s * c;
    const T mx = *std::max_element(row, row + c);
    T sum{0};
    for (std::size_t j = 0; j < c; ++j) {
      g[j] = std::exp(row[j] - mx);
      sum += g[j];
    }
    total += static_cast<double>(std::log(sum) + mx - row[labels[s]]);
    const T inv_n = T{1} / static_cast<T>(n);
    for (std::size_t j = 0; j < c; ++j) g[j] = g[j] / sum * inv_n;
    g[labels[s]] -= inv_n;
  }
  r.loss = static_cast<T>(total / static_cast<double>(n));
  return r;
}

template <typename T>
std::vector<Label> argmax_rows(const BasicTensor<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("argmax_rows: expects (N, C), got " + to_string(logits.shape()));
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  std::vector<Label> out(n);
  for (std::size_t s = 0; s < n; ++s) {
    const T* row = logits.data().data() + s * c;
    out[s] = static_cast<Label>(std::max_element(row, row + c) - row);
  }
  return out;
}

template LossResult<float> softmax_cross_entropy<float>(const BasicTensor<float>&, std::span<const Label>);
template LossResult<double> softmax_cross_entropy<double>(const BasicTensor<double>&, std::span<const Label>);
template std::vector<Label> argmax_rows<float>(const BasicTensor<float>&);
template std::vector<Label> argmax_rows<double>(const BasicTensor<double>&);

}  // namespace sfl
