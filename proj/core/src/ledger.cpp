#include "sfl/ledger.hpp"

namespace sfl {

std::string_view to_string(Direction d) { return d == Direction::Up ? "up" : "down"; }

std::string_view to_string(Purpose p) {
  switch (p) {
    case Purpose::Activation: return "activation";
    case Purpose::Gradient: return "gradient";
    case Purpose::ModelUp: return "model_up";
    case Purpose::ModelDown: return "model_down";
    case Purpose::Labels: return "labels";
  }
  return "unknown";
}

bool LedgerQuery::matches(const TrafficRecord& r) const {
  return (!round || *round == r.round) && (!device || *device == r.device) &&
         (!direction || *direction == r.direction) && (!purpose || *purpose == r.purpose);
}

void TrafficLedger::merge(const TrafficLedger& shard) {
  records_.insert(records_.end(), shard.records_.begin(), shard.records_.end());
}

std::uint64_t TrafficLedger::total(const LedgerQuery& query) const {
  std::uint64_t sum = 0;
  for (const auto& r : records_) {
    if (query.matches(r)) sum += r.bytes;
  }
  return sum;
}

}  // namespace sfl
