#include "sfl/netsim.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "sfl/error.hpp"

namespace sfl {

void NetworkProfile::validate() const {
  if (!(up_mbps > 0.0) || !(down_mbps > 0.0) || !std::isfinite(up_mbps) || !std::isfinite(down_mbps)) {
    throw ConfigError("network profile '" + name + "' needs positive uplink and downlink bandwidth");
  }
}

std::vector<NetworkProfile> builtin_profiles() {
  return {{"wifi", 50.0, 50.0}, {"4g", 10.0, 42.0}, {"3g", 3.0, 6.0}};
}

NetworkProfile profile_by_name(const std::string& name) {
  std::string key;
  for (char c : name) key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  for (const auto& p : builtin_profiles()) {
    if (p.name == key) return p;
  }
  const auto slash = key.find('/');
  if (slash != std::string::npos) {
    NetworkProfile p;
    p.name = key;
    try {
      std::size_t used = 0;
      p.up_mbps = std::stod(key.substr(0, slash), &used);
      if (used != slash) throw std::invalid_argument("up");
      const std::string down = key.substr(slash + 1);
      p.down_mbps = std::stod(down, &used);
      if (used != down.size()) throw std::invalid_argument("down");
    } catch (const std::logic_error&) {
      throw ConfigError("network profile '" + name + "' is not UP/DOWN in Mbps");
    }
    p.validate();
    return p;
  }
  throw ConfigError("unknown network profile '" + name + "' (wifi, 4g, 3g or UP/DOWN)");
}

double transfer_time(std::uint64_t bytes, Direction direction, const NetworkProfile& profile) {
  profile.validate();
  const double mbps = direction == Direction::Up ? profile.up_mbps : profile.down_mbps;
  return static_cast<double>(bytes) * 8.0 / (mbps * 1e6);
}

void ComputeSpeeds::validate() const {
  if (!(device_units_per_s > 0.0) || !(server_units_per_s > 0.0)) {
    throw ConfigError("compute speeds must be positive");
  }
}

LatencyReport round_latency(const TrafficLedger& ledger, std::uint32_t round, std::span<const DeviceWork> work,
                            const ComputeSpeeds& speeds, const NetworkProfile& profile) {
  speeds.validate();
  profile.validate();
  LatencyReport report;
  for (const auto& w : work) {
    DeviceLatency d;
    d.device = w.device;
    d.device_compute_s = static_cast<double>(w.device_units) / speeds.device_units_per_s;
    d.server_compute_s = static_cast<double>(w.server_units) / speeds.server_units_per_s;
    d.uplink_s = transfer_time(ledger.total({round, w.device, Direction::Up, {}}), Direction::Up, profile);
    d.downlink_s = transfer_time(ledger.total({round, w.device, Direction::Down, {}}), Direction::Down, profile);
    report.devices.push_back(d);
  }
  const auto slowest = std::max_element(report.devices.begin(), report.devices.end(),
                                        [](const auto& a, const auto& b) { return a.total_s() < b.total_s(); });
  if (slowest != report.devices.end()) {
    report.round_s = slowest->total_s();
    report.compute_s = slowest->compute_s();
    report.comm_s = slowest->comm_s();
    report.comm_share = report.round_s > 0.0 ? report.comm_s / report.round_s : 0.0;
  }
  return report;
}

}  // namespace sfl
