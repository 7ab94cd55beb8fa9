#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace sfl {

enum class Direction : std::uint8_t { Up, Down };
enum class Purpose : std::uint8_t { Activation, Gradient, ModelUp, ModelDown, Labels };

inline constexpr std::size_t kPurposeCount = 5;

std::string_view to_string(Direction d);
std::string_view to_string(Purpose p);

struct TrafficRecord {
  std::uint32_t round = 0;
  std::uint16_t device = 0;
  Direction direction = Direction::Up;
  Purpose purpose = Purpose::Activation;
  std::uint64_t bytes = 0;

  friend bool operator==(const TrafficRecord&, const TrafficRecord&) = default;
};

/// Any unset field matches everything.
struct LedgerQuery {
  std::optional<std::uint32_t> round;
  std::optional<std::uint16_t> device;
  std::optional<Direction> direction;
  std::optional<Purpose> purpose;

  bool matches(const TrafficRecord& r) const;
};

/// Append-only device<->server traffic log. Workers append to private shards
/// which the coordinator merges, in device order, at the round barrier.
class TrafficLedger {
 public:
  void append(const TrafficRecord& record) { records_.push_back(record); }
  void merge(const TrafficLedger& shard);

  std::uint64_t total(const LedgerQuery& query = {}) const;
  const std::vector<TrafficRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

 private:
  std::vector<TrafficRecord> records_;
};

}  // namespace sfl
