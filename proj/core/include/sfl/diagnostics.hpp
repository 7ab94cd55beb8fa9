#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "sfl/layer.hpp"
#include "sfl/loss.hpp"
#include "sfl/quantizer.hpp"

namespace sfl {

/// Parameters of a stack as one flat vector, layer by layer.
template <typename T>
std::vector<double> flatten_params(const LayerStack<T>& layers);
template <typename T>
void assign_params(LayerStack<T>& layers, std::span<const double> flat);
template <typename T>
std::vector<double> flatten_gradients(const Gradients<T>& grads);

/// Server-side gradient statistics on one probe batch.
struct ProbeGradient {
  std::vector<double> mean_grad;   ///< gradient of the batch-mean loss
  double loss = 0.0;               ///< batch-mean loss
  double max_sample_grad_sq = 0.0; ///< largest per-sample squared gradient norm
  std::size_t samples = 0;
};

template <typename T>
ProbeGradient probe_gradient(const LayerStack<T>& server, const BasicTensor<T>& activation,
                             std::span<const Label> labels);

/// What one device contributes to a round's record.
struct DeviceProbe {
  std::uint16_t device = 0;
  ProbeGradient gradient;
  QuantizationError quantization;
  double delta = 0.0;
};

struct DiagnosticsRecord {
  std::size_t round = 0;
  double eta = 0.0;
  double grad_norm_sq = 0.0;  ///< ||(1/K) sum_k grad F_{S,k}(w_S^t)||^2
  std::vector<double> epsilon;          ///< per device
  std::vector<double> delta;            ///< per device
  std::vector<double> loss_difference;  ///< per device, quantized minus exact loss
  double loss = 0.0;                    ///< (1/K) sum_k F_{S,k}(w_S^t)
  double gamma = 0.0;                   ///< sum of eta up to and including this round
  double max_sample_grad_sq = 0.0;
  double update_norm = 0.0;  ///< ||w_S^{t+1} - w_S^t|| after aggregation

  double eps_mean() const;
  double delta_mean() const;
};

/// Merges the per-device probes of round t; `previous_gamma` is the running
/// sum of earlier rates.
DiagnosticsRecord make_record(std::size_t round, double eta, std::span<const DeviceProbe> probes,
                              double previous_gamma);

/// Largest per-sample squared gradient norm seen in `records` (0 when empty).
double estimate_G(std::span<const DiagnosticsRecord> records);

using GradientFn = std::function<std::vector<double>(std::span<const double>)>;
using WeightPair = std::pair<std::vector<double>, std::vector<double>>;

struct SmoothnessOptions {
  std::size_t pairs_per_anchor = 2;
  double sigma = 1e-2;
  std::uint64_t seed = 0;
};

/// Two independent Gaussian perturbations of each anchor per pair. Pairs
/// with w == v are dropped.
std::vector<WeightPair> perturbation_pairs(std::span<const std::vector<double>> anchors,
                                           const SmoothnessOptions& options);

/// max over pairs of ||grad(w) - grad(v)|| / ||w - v||; pairs with w == v
/// are skipped. 0 when no usable pair remains.
double estimate_L(const GradientFn& gradient, std::span<const WeightPair> pairs);

struct BoundRow {
  std::size_t rounds = 0;  ///< T
  double gamma = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;  ///< lhs / rhs
  double rhs_initial = 0.0;       ///< 4 (F_0 - F*) / (3 Gamma)
  double rhs_quantization = 0.0;  ///< G (1/Gamma) sum eta (eps + delta)
  double rhs_smoothness = 0.0;    ///< G (1/Gamma) sum eta (L/2) eta
  bool holds() const { return lhs <= rhs; }
};

struct BoundReport {
  double G_hat = 0.0;
  double L_hat = 0.0;
  double F_star = 0.0;
  double F_initial = 0.0;
  std::vector<BoundRow> rows;  ///< one per prefix T = 1 .. records.size()
  const BoundRow& at(std::size_t rounds) const;
};

/// LHS_T = (1/Gamma_T) sum_{t<T} eta_t ||grad F_S||^2 and
/// RHS_T = 4 (F_S(w^0) - F*) / (3 Gamma_T)
///       + G (1/Gamma_T) sum_{t<T} eta_t ((eps_t + delta_t) + (L/2) eta_t),
/// with eps_t, delta_t the device means. Needs at least two records and a
/// positive Gamma.
BoundReport bound_report(std::span<const DiagnosticsRecord> records, double G_hat, double L_hat, double F_star);

/// Smallest observed loss, the anchor for F*.
double min_observed_loss(std::span<const DiagnosticsRecord> records);

}  // namespace sfl
