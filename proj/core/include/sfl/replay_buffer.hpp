#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>

#include "sfl/quantizer.hpp"

namespace sfl {

/// The device-side switch that gates activation uploads to rounds with
/// t mod rho == 0.
struct ActivationSwitch {
  std::uint32_t rho = 1;

  explicit ActivationSwitch(std::uint32_t period = 1);
  bool is_on(std::uint64_t round) const { return round % rho == 0; }
};

bool switch_is_on(std::uint64_t round, std::uint32_t rho);

/// Number of rounds in [0, rounds) on which the switch is on: ceil(T / rho).
std::uint64_t transmission_rounds(std::uint64_t rounds, std::uint32_t rho);

using ActivationRecord = std::variant<QuantizedActivation, RawActivation>;

std::uint32_t round_tag(const ActivationRecord& r);
std::uint16_t device_id(const ActivationRecord& r);
std::uint32_t batch_index(const ActivationRecord& r);
const std::vector<Label>& labels(const ActivationRecord& r);
Tensor decode(const ActivationRecord& r);

/// Bytes the record occupies on the wire and in the buffer. Quantized records
/// use the QACT size; raw records count 4 bytes per element plus 2 per label.
std::size_t record_bytes(const ActivationRecord& r);

class BufferMiss : public ContractError {
 public:
  using ContractError::ContractError;
};

/// Server-side cache of the most recent activation record per
/// (device, batch). No eviction; one full pass per device is held.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(ActivationSwitch sw = ActivationSwitch{1}) : switch_(sw) {}

  /// Replaces the entry for the record's (device, batch) key. Rejects records
  /// whose round tag falls on a switch-off round.
  void store(ActivationRecord record);

  /// Throws BufferMiss when no refresh has produced this key yet.
  const ActivationRecord& fetch(std::uint16_t device, std::uint32_t batch) const;

  bool contains(std::uint16_t device, std::uint32_t batch) const;
  std::size_t size() const { return entries_.size(); }
  std::size_t total_bytes() const { return total_bytes_; }
  const ActivationSwitch& activation_switch() const { return switch_; }

  /// Round of the latest store for `device`, if any.
  std::optional<std::uint32_t> last_refresh_round(std::uint16_t device) const;

  const std::map<std::pair<std::uint16_t, std::uint32_t>, ActivationRecord>& entries() const { return entries_; }

  /// Writes each quantized entry to `dir/{device}_{batch}.qact`. Raw entries
  /// have no on-disk form and are rejected.
  void spill(const std::string& dir) const;

  /// Loads every *.qact file in `dir`.
  static ReplayBuffer load_spill(const std::string& dir, ActivationSwitch sw);

 private:
  ActivationSwitch switch_;
  std::map<std::pair<std::uint16_t, std::uint32_t>, ActivationRecord> entries_;
  std::map<std::uint16_t, std::uint32_t> last_refresh_;
  std::size_t total_bytes_ = 0;
};

/// A freshly computed (unquantized) activation for a buffered key.
struct FreshActivation {
  std::uint16_t device_id = 0;
  std::uint32_t batch_index = 0;
  Tensor values;
};

/// Mean over `fresh` of the L2 distance between the decoded buffered record
/// and the fresh activation. Zero for an empty probe set.
double buffer_distance_proxy(const ReplayBuffer& buffer, std::span<const FreshActivation> fresh);

}  // namespace sfl
