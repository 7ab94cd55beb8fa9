#pragma once

#include <string>
#include <vector>

#include "sfl/diagnostics.hpp"
#include "sfl/runtime.hpp"

namespace sfl {

inline constexpr const char* kMetricsHeader =
    "round,device,mode,server_loss,test_acc,bytes_up,bytes_down,epsilon_hat,delta_hat,sim_latency_s";
inline constexpr const char* kDiagnosticsHeader =
    "t,eta,grad_norm_sq,eps_mean,delta_mean,loss,gamma,lhs_running,rhs_running";

/// One row per (round, device). Unmeasured epsilon/delta are written as "nan".
std::string format_metrics_csv(const std::vector<RoundResult>& rounds);
void write_metrics_csv(const std::string& path, const std::vector<RoundResult>& rounds);

struct MetricsRow {
  std::size_t round = 0;
  std::uint16_t device = 0;
  std::string mode;
  double server_loss = 0.0;
  double test_acc = 0.0;
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
  double epsilon_hat = 0.0;
  double delta_hat = 0.0;
  double sim_latency_s = 0.0;
};
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

/// lhs/rhs columns come from `report` when present, otherwise "nan".
std::string format_diagnostics_csv(const std::vector<DiagnosticsRecord>& records, const BoundReport* report);
void write_diagnostics_csv(const std::string& path, const std::vector<DiagnosticsRecord>& records,
                           const BoundReport* report);
/// Rebuilds records with one epsilon and one delta entry (the device means).
std::vector<DiagnosticsRecord> read_diagnostics_csv(const std::string& path);

std::string format_estimates_json(const Estimates& estimates, const BoundReport* report);
void write_estimates_json(const std::string& path, const Estimates& estimates, const BoundReport* report);
Estimates read_estimates_json(const std::string& path);

std::string format_bound_report(const BoundReport& report);

}  // namespace sfl
