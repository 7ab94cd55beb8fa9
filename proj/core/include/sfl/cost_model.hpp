#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sfl/ledger.hpp"
#include "sfl/model_spec.hpp"

namespace sfl {

/// Training methods as they appear in the per-round device cost comparison.
/// ActionFed is split by round kind: a transmission round (switch on) and a
/// buffer round (switch off).
enum class Method { ClassicFL, VanillaDPFL, LocalLossDPFL, ActionFedNoBuffer, ActionFedBuffer };

std::string_view to_string(Method m);
std::vector<Method> all_methods();

inline constexpr std::size_t kRawBytesPerElement = 4;
inline constexpr std::size_t kQuantizedBytesPerElement = 1;
inline constexpr std::size_t kLabelBytes = 2;

struct CostSetting {
  ModelSpec spec;
  PartitionPoint point;
  std::vector<std::size_t> samples_per_device;  ///< |D_k| for each device
  std::size_t batch_size = 100;
  bool quantize = true;
};

/// The cost table's reference setting: CIFAR-10 shapes, K = 5 devices with
/// 10000 samples each, 100-sample batches, 8-bit activations.
CostSetting reference_setting(const std::string& model_name);

/// Per-device, per-round costs. Bytes are split by ledger purpose;
/// computation is in multiply-accumulates, where training a stack costs
/// twice its forward pass.
struct DeviceCost {
  std::array<std::uint64_t, kPurposeCount> bytes_by_purpose{};
  std::uint64_t device_units = 0;
  std::uint64_t server_units = 0;

  std::uint64_t bytes(Purpose p) const { return bytes_by_purpose[static_cast<std::size_t>(p)]; }
  std::uint64_t up_bytes() const;
  std::uint64_t down_bytes() const;
  std::uint64_t total_bytes() const { return up_bytes() + down_bytes(); }
};

struct CostRow {
  Method method = Method::ClassicFL;
  std::vector<DeviceCost> per_device;
  DeviceCost aggregate;  ///< sum over devices
};

struct CostReport {
  CostSetting setting;
  std::vector<CostRow> rows;

  const CostRow& row(Method m) const;
};

CostRow comm_bytes_per_round(Method method, const CostSetting& setting);
CostReport cost_report(const CostSetting& setting);

/// Aggregate bytes of `a` divided by aggregate bytes of `b`.
double cost_ratio(Method a, Method b, const CostSetting& setting);

/// Device-side computation for one device holding `samples` samples.
std::uint64_t computation_units(Method method, const ModelSpec& spec, PartitionPoint point, std::size_t samples);

/// Server-side computation for the same device's data.
std::uint64_t server_units(Method method, const ModelSpec& spec, PartitionPoint point, std::size_t samples);

inline double to_gib(std::uint64_t bytes) { return static_cast<double>(bytes) / static_cast<double>(1ULL << 30); }

/// Aligned text and CSV renderings of a report (GiB and raw bytes).
std::string format_cost_table(const CostReport& report);
std::string format_cost_csv(const CostReport& report);

}  // namespace sfl
