#include "sfl/fedavg.hpp"

#include <string>
#include <vector>

namespace sfl {

template <typename T>
LayerStack<T> fedavg(std::span<const LayerStack<T>> models, std::span<const std::size_t> sample_counts) {
  if (models.empty()) throw ContractError("fedavg: no models");
  if (models.size() != sample_counts.size()) {
    throw ContractError("fedavg: " + std::to_string(models.size()) + " models but " +
                        std::to_string(sample_counts.size()) + " sample counts");
  }
  std::size_t total = 0;
  for (std::size_t n : sample_counts) total += n;
  if (total == 0) throw ContractError("fedavg: total sample count is zero");

  const LayerStack<T>& base = models.front();
  for (std::size_t k = 1; k < models.size(); ++k) {
    const auto& m = models[k];
    bool same = m.size() == base.size();
    for (std::size_t i = 0; same && i < m.size(); ++i) {
      same = m[i].kind == base[i].kind && m[i].params.size() == base[i].params.size();
      for (std::size_t p = 0; same && p < m[i].params.size(); ++p) same = m[i].params[p].shape() == base[i].params[p].shape();
    }
    if (!same) throw ShapeError("fedavg: model " + std::to_string(k) + " differs in structure from model 0");
  }

  std::vector<double> weight(models.size());
  for (std::size_t k = 0; k < models.size(); ++k) weight[k] = static_cast<double>(sample_counts[k]) / static_cast<double>(total);

  LayerStack<T> out = base;
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t p = 0; p < out[i].params.size(); ++p) {
      auto& dst = out[i].params[p];
      const auto& w0 = base[i].params[p];
      for (std::size_t e = 0; e < dst.size(); ++e) {
        const double anchor = static_cast<double>(w0[e]);
        double delta = 0.0;
        for (std::size_t k = 1; k < models.size(); ++k) {
          delta += weight[k] * (static_cast<double>(models[k][i].params[p][e]) - anchor);
        }
        dst[e] = static_cast<T>(anchor + delta);
      }
    }
  }
  return out;
}

template LayerStack<float> fedavg<float>(std::span<const LayerStack<float>>, std::span<const std::size_t>);
template LayerStack<double> fedavg<double>(std::span<const LayerStack<double>>, std::span<const std::size_t>);

}  // namespace sfl
