#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sfl/ledger.hpp"

namespace sfl {

struct NetworkProfile {
  std::string name;
  double up_mbps = 50.0;
  double down_mbps = 50.0;

  void validate() const;
};

/// "wifi" (50/50), "4g" (10/42), "3g" (3/6), or an explicit "UP/DOWN" pair
/// in Mbps such as "20/80".
NetworkProfile profile_by_name(const std::string& name);
std::vector<NetworkProfile> builtin_profiles();

/// bytes * 8 / (Mbps * 1e6); no queuing, loss or protocol overhead.
double transfer_time(std::uint64_t bytes, Direction direction, const NetworkProfile& profile);

/// Throughputs in multiply-accumulates per second.
struct ComputeSpeeds {
  double device_units_per_s = 1e9;
  double server_units_per_s = 2e10;

  void validate() const;
};

struct DeviceWork {
  std::uint16_t device = 0;
  std::uint64_t device_units = 0;
  std::uint64_t server_units = 0;
};

struct DeviceLatency {
  std::uint16_t device = 0;
  double device_compute_s = 0.0;
  double server_compute_s = 0.0;
  double uplink_s = 0.0;
  double downlink_s = 0.0;

  double compute_s() const { return device_compute_s + server_compute_s; }
  double comm_s() const { return uplink_s + downlink_s; }
  double total_s() const { return compute_s() + comm_s(); }
};

struct LatencyReport {
  std::vector<DeviceLatency> devices;
  double round_s = 0.0;     ///< slowest device
  double compute_s = 0.0;   ///< of the slowest device
  double comm_s = 0.0;      ///< of the slowest device
  double comm_share = 0.0;  ///< comm_s / round_s
};

/// First-order latency of one round: per device, compute on both sides plus
/// every transfer recorded in `ledger` for (round, device), all sequential.
/// The round takes as long as its slowest device.
LatencyReport round_latency(const TrafficLedger& ledger, std::uint32_t round, std::span<const DeviceWork> work,
                            const ComputeSpeeds& speeds, const NetworkProfile& profile);

}  // namespace sfl
