#include "sfl/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace sfl {

template <typename T>
std::vector<double> flatten_params(const LayerStack<T>& layers) {
  std::vector<double> out;
  for (const auto& layer : layers) {
    for (const auto& p : layer.params) out.insert(out.end(), p.data().begin(), p.data().end());
  }
  return out;
}

template <typename T>
void assign_params(LayerStack<T>& layers, std::span<const double> flat) {
  std::size_t at = 0;
  for (auto& layer : layers) {
    for (auto& p : layer.params) {
      if (at + p.size() > flat.size()) throw ShapeError("assign_params: flat vector too short");
      for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<T>(flat[at + i]);
      at += p.size();
    }
  }
  if (at != flat.size()) throw ShapeError("assign_params: flat vector too long");
}

template <typename T>
std::vector<double> flatten_gradients(const Gradients<T>& grads) {
  std::vector<double> out;
  for (const auto& layer : grads.params) {
    for (const auto& g : layer) out.insert(out.end(), g.data().begin(), g.data().end());
  }
  return out;
}

template <typename T>
ProbeGradient probe_gradient(const LayerStack<T>& server, const BasicTensor<T>& activation,
                             std::span<const Label> labels) {
  ProbeGradient out;
  out.samples = labels.size();
  const auto trace = forward(server, activation);
  const auto loss = softmax_cross_entropy(trace.output(), labels);
  out.loss = static_cast<double>(loss.loss);
  out.mean_grad = flatten_gradients(backward(server, trace, loss.grad));

  Shape one = activation.shape();
  one[0] = 1;
  const std::size_t per = activation.inner_size();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::vector<T> row(activation.data().begin() + static_cast<long>(i * per),
                       activation.data().begin() + static_cast<long>((i + 1) * per));
    const BasicTensor<T> x(one, std::move(row));
    const auto t = forward(server, x);
    const auto l = softmax_cross_entropy(t.output(), labels.subspan(i, 1));
    const auto g = flatten_gradients(backward(server, t, l.grad));
    const double sq = std::inner_product(g.begin(), g.end(), g.begin(), 0.0);
    out.max_sample_grad_sq = std::max(out.max_sample_grad_sq, sq);
  }
  return out;
}

double DiagnosticsRecord::eps_mean() const {
  return epsilon.empty() ? 0.0 : std::accumulate(epsilon.begin(), epsilon.end(), 0.0) / static_cast<double>(epsilon.size());
}

double DiagnosticsRecord::delta_mean() const {
  return delta.empty() ? 0.0 : std::accumulate(delta.begin(), delta.end(), 0.0) / static_cast<double>(delta.size());
}

DiagnosticsRecord make_record(std::size_t round, double eta, std::span<const DeviceProbe> probes,
                              double previous_gamma) {
  DiagnosticsRecord r;
  r.round = round;
  r.eta = eta;
  r.gamma = previous_gamma + eta;
  if (probes.empty()) return r;
  std::vector<double> mean(probes.front().gradient.mean_grad.size(), 0.0);
  for (const auto& p : probes) {
    if (p.gradient.mean_grad.size() != mean.size()) throw ShapeError("make_record: probe gradients differ in size");
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += p.gradient.mean_grad[i];
    r.loss += p.gradient.loss;
    r.max_sample_grad_sq = std::max(r.max_sample_grad_sq, p.gradient.max_sample_grad_sq);
    r.epsilon.push_back(p.quantization.gradient_error);
    r.loss_difference.push_back(p.quantization.loss_difference);
    r.delta.push_back(p.delta);
  }
  const double k = static_cast<double>(probes.size());
  for (double& v : mean) v /= k;
  r.grad_norm_sq = std::inner_product(mean.begin(), mean.end(), mean.begin(), 0.0);
  r.loss /= k;
  return r;
}

double estimate_G(std::span<const DiagnosticsRecord> records) {
  double g = 0.0;
  for (const auto& r : records) g = std::max(g, r.max_sample_grad_sq);
  return g;
}

std::vector<WeightPair> perturbation_pairs(std::span<const std::vector<double>> anchors,
                                           const SmoothnessOptions& options) {
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> noise(0.0, options.sigma);
  std::vector<WeightPair> pairs;
  for (const auto& anchor : anchors) {
    for (std::size_t p = 0; p < options.pairs_per_anchor; ++p) {
      WeightPair pair{anchor, anchor};
      for (double& x : pair.first) x += noise(rng);
      for (double& x : pair.second) x += noise(rng);
      if (pair.first != pair.second) pairs.push_back(std::move(pair));
    }
  }
  return pairs;
}

double estimate_L(const GradientFn& gradient, std::span<const WeightPair> pairs) {
  double best = 0.0;
  for (const auto& [w, v] : pairs) {
    if (w.size() != v.size()) throw ShapeError("estimate_L: pair members differ in size");
    double den = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) den += (w[i] - v[i]) * (w[i] - v[i]);
    if (den == 0.0) continue;
    const auto gw = gradient(w);
    const auto gv = gradient(v);
    if (gw.size() != gv.size()) throw ShapeError("estimate_L: gradient sizes differ");
    double num = 0.0;
    for (std::size_t i = 0; i < gw.size(); ++i) num += (gw[i] - gv[i]) * (gw[i] - gv[i]);
    best = std::max(best, std::sqrt(num) / std::sqrt(den));
  }
  return best;
}

const BoundRow& BoundReport::at(std::size_t rounds) const {
  for (const auto& r : rows) {
    if (r.rounds == rounds) return r;
  }
  throw ContractError("bound report has no row for T = " + std::to_string(rounds));
}

double min_observed_loss(std::span<const DiagnosticsRecord> records) {
  if (records.empty()) throw ContractError("min_observed_loss: no records");
  double m = records.front().loss;
  for (const auto& r : records) m = std::min(m, r.loss);
  return m;
}

BoundReport bound_report(std::span<const DiagnosticsRecord> records, double G_hat, double L_hat, double F_star) {
  if (records.size() < 2) throw ContractError("bound_report: needs at least two records");
  BoundReport rep;
  rep.G_hat = G_hat;
  rep.L_hat = L_hat;
  rep.F_star = F_star;
  rep.F_initial = records.front().loss;
  double gamma = 0.0, weighted_grad = 0.0, weighted_quant = 0.0, weighted_eta = 0.0;
  for (std::size_t t = 0; t < records.size(); ++t) {
    const auto& r = records[t];
    gamma += r.eta;
    weighted_grad += r.eta * r.grad_norm_sq;
    weighted_quant += r.eta * (r.eps_mean() + r.delta_mean());
    weighted_eta += r.eta * r.eta;
    BoundRow row;
    row.rounds = t + 1;
    row.gamma = gamma;
    if (gamma > 0.0) {
      row.lhs = weighted_grad / gamma;
      row.rhs_initial = 4.0 * (rep.F_initial - F_star) / (3.0 * gamma);
      row.rhs_quantization = G_hat * weighted_quant / gamma;
      row.rhs_smoothness = G_hat * (L_hat / 2.0) * weighted_eta / gamma;
      row.rhs = row.rhs_initial + row.rhs_quantization + row.rhs_smoothness;
      row.ratio = row.rhs > 0.0 ? row.lhs / row.rhs : 0.0;
    }
    rep.rows.push_back(row);
  }
  if (!(gamma > 0.0)) throw ContractError("bound_report: the learning rates sum to zero");
  return rep;
}

template std::vector<double> flatten_params<float>(const LayerStack<float>&);
template std::vector<double> flatten_params<double>(const LayerStack<double>&);
template void assign_params<float>(LayerStack<float>&, std::span<const double>);
template void assign_params<double>(LayerStack<double>&, std::span<const double>);
template std::vector<double> flatten_gradients<float>(const Gradients<float>&);
template std::vector<double> flatten_gradients<double>(const Gradients<double>&);
template ProbeGradient probe_gradient<float>(const LayerStack<float>&, const BasicTensor<float>&,
                                             std::span<const Label>);
template ProbeGradient probe_gradient<double>(const LayerStack<double>&, const BasicTensor<double>&,
                                              std::span<const Label>);

}  // namespace sfl
