#include "sfl/replay_buffer.hpp"

#include <cmath>
#include <filesystem>

#include "byte_io.hpp"

namespace sfl {

ActivationSwitch::ActivationSwitch(std::uint32_t period) : rho(period) {
  if (rho == 0) throw ConfigError("activation switch period rho must be >= 1");
}

bool switch_is_on(std::uint64_t round, std::uint32_t rho) { return ActivationSwitch(rho).is_on(round); }

std::uint64_t transmission_rounds(std::uint64_t rounds, std::uint32_t rho) {
  if (rho == 0) throw ConfigError("activation switch period rho must be >= 1");
  return (rounds + rho - 1) / rho;
}

std::uint32_t round_tag(const ActivationRecord& r) {
  return std::visit([](const auto& v) { return v.round_tag; }, r);
}

std::uint16_t device_id(const ActivationRecord& r) {
  return std::visit([](const auto& v) { return v.device_id; }, r);
}

std::uint32_t batch_index(const ActivationRecord& r) {
  return std::visit([](const auto& v) { return v.batch_index; }, r);
}

const std::vector<Label>& labels(const ActivationRecord& r) {
  return std::visit([](const auto& v) -> const std::vector<Label>& { return v.labels; }, r);
}

Tensor decode(const ActivationRecord& r) {
  if (const auto* q = std::get_if<QuantizedActivation>(&r)) return dequantize<float>(*q);
  return std::get<RawActivation>(r).values;
}

std::size_t record_bytes(const ActivationRecord& r) {
  if (const auto* q = std::get_if<QuantizedActivation>(&r)) {
    return qact_record_size(q->shape.size(), q->payload.size(), q->labels.size());
  }
  const auto& raw = std::get<RawActivation>(r);
  return 4 * raw.values.size() + 2 * raw.labels.size();
}

void ReplayBuffer::store(ActivationRecord record) {
  const std::uint32_t tag = round_tag(record);
  if (!switch_.is_on(tag)) {
    throw ContractError("replay buffer: store at round " + std::to_string(tag) + " while the switch is off (rho=" +
                        std::to_string(switch_.rho) + ")");
  }
  const auto key = std::make_pair(device_id(record), batch_index(record));
  const std::size_t bytes = record_bytes(record);
  auto it = entries_.find(key);
  if (it != entries_.end()) {
    total_bytes_ -= record_bytes(it->second);
    it->second = std::move(record);
  } else {
    entries_.emplace(key, std::move(record));
  }
  total_bytes_ += bytes;
  last_refresh_[key.first] = tag;
}

const ActivationRecord& ReplayBuffer::fetch(std::uint16_t device, std::uint32_t batch) const {
  auto it = entries_.find({device, batch});
  if (it == entries_.end()) {
    throw BufferMiss("replay buffer: no entry for device " + std::to_string(device) + " batch " + std::to_string(batch));
  }
  return it->second;
}

bool ReplayBuffer::contains(std::uint16_t device, std::uint32_t batch) const {
  return entries_.count({device, batch}) > 0;
}

std::optional<std::uint32_t> ReplayBuffer::last_refresh_round(std::uint16_t device) const {
  auto it = last_refresh_.find(device);
  if (it == last_refresh_.end()) return std::nullopt;
  return it->second;
}

void ReplayBuffer::spill(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  for (const auto& [key, record] : entries_) {
    const auto* q = std::get_if<QuantizedActivation>(&record);
    if (!q) throw ContractError("replay buffer: raw (unquantized) entries cannot be spilled");
    const auto path = std::filesystem::path(dir) / (std::to_string(key.first) + "_" + std::to_string(key.second) + ".qact");
    detail::write_file(path.string(), serialize(*q));
  }
}

ReplayBuffer ReplayBuffer::load_spill(const std::string& dir, ActivationSwitch sw) {
  if (!std::filesystem::is_directory(dir)) throw IoError("replay buffer: no spill directory " + dir);
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".qact") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  ReplayBuffer buffer(sw);
  for (const auto& f : files) buffer.store(deserialize_qact(detail::read_file(f.string())));
  return buffer;
}

double buffer_distance_proxy(const ReplayBuffer& buffer, std::span<const FreshActivation> fresh) {
  if (fresh.empty()) return 0.0;
  double total = 0.0;
  for (const auto& f : fresh) {
    const Tensor cached = decode(buffer.fetch(f.device_id, f.batch_index));
    if (cached.shape() != f.values.shape()) {
      throw ShapeError("buffer_distance_proxy: cached shape " + to_string(cached.shape()) + " vs fresh " +
                       to_string(f.values.shape()));
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < cached.size(); ++i) {
      const double d = static_cast<double>(cached[i]) - static_cast<double>(f.values[i]);
      sq += d * d;
    }
    total += std::sqrt(sq);
  }
  return total / static_cast<double>(fresh.size());
}

}  // namespace sfl
