#include "sfl/cost_model.hpp"

#include <cstdio>
#include <sstream>

#include "sfl/quantizer.hpp"

namespace sfl {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::ClassicFL: return "FL";
    case Method::VanillaDPFL: return "SplitFed";
    case Method::LocalLossDPFL: return "LGL";
    case Method::ActionFedNoBuffer: return "ActionFed w/o buffer";
    case Method::ActionFedBuffer: return "ActionFed w buffer";
  }
  return "unknown";
}

std::vector<Method> all_methods() {
  return {Method::ClassicFL, Method::VanillaDPFL, Method::LocalLossDPFL, Method::ActionFedNoBuffer,
          Method::ActionFedBuffer};
}

CostSetting reference_setting(const std::string& model_name) {
  CostSetting s;
  s.spec = builtin_spec(model_name);
  s.point = default_partition(s.spec);
  s.samples_per_device.assign(5, 10000);
  s.batch_size = 100;
  s.quantize = true;
  return s;
}

std::uint64_t DeviceCost::up_bytes() const {
  return bytes(Purpose::Activation) + bytes(Purpose::Labels) + bytes(Purpose::ModelUp);
}

std::uint64_t DeviceCost::down_bytes() const { return bytes(Purpose::Gradient) + bytes(Purpose::ModelDown); }

const CostRow& CostReport::row(Method m) const {
  for (const auto& r : rows) {
    if (r.method == m) return r;
  }
  throw ContractError("cost report has no row for " + std::string(to_string(m)));
}

namespace {

struct Geometry {
  std::uint64_t full_params = 0, device_params = 0, head_params = 0;
  std::uint64_t full_macs = 0, device_macs = 0, server_macs = 0, head_macs = 0;
  std::uint64_t activation_elems = 0;  // per sample
  std::size_t activation_rank = 0;     // of a batched activation tensor
};

Geometry geometry(const ModelSpec& spec, PartitionPoint point) {
  const auto layers = build_model_uninitialized<float>(spec);
  if (point.op_index == 0 || point.op_index >= layers.size()) {
    throw ContractError("cost model: offloading point " + std::to_string(point.op_index) + " outside (0, " +
                        std::to_string(layers.size()) + ")");
  }
  Geometry g;
  Shape shape = spec.input_shape;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const bool on_device = i < point.op_index;
    const std::uint64_t macs = forward_macs(layers[i], shape);
    g.full_params += layers[i].parameter_count();
    g.full_macs += macs;
    if (on_device) {
      g.device_params += layers[i].parameter_count();
      g.device_macs += macs;
    } else {
      g.server_macs += macs;
    }
    shape = output_shape(layers[i], shape);
    if (i + 1 == point.op_index) {
      g.activation_elems = element_count(shape);
      g.activation_rank = shape.size() + 1;
      g.head_params = g.activation_elems * spec.num_classes + spec.num_classes;
      g.head_macs = g.activation_elems * spec.num_classes;
    }
  }
  return g;
}

DeviceCost device_cost(Method method, const CostSetting& s, const Geometry& g, std::size_t n) {
  DeviceCost c;
  auto add = [&](Purpose p, std::uint64_t b) { c.bytes_by_purpose[static_cast<std::size_t>(p)] += b; };
  const std::uint64_t samples = n;
  const std::uint64_t raw_act = kRawBytesPerElement * g.activation_elems * samples;
  switch (method) {
    case Method::ClassicFL:
      add(Purpose::ModelUp, kRawBytesPerElement * g.full_params);
      add(Purpose::ModelDown, kRawBytesPerElement * g.full_params);
      c.device_units = 2 * g.full_macs * samples;
      break;
    case Method::VanillaDPFL:
      add(Purpose::Activation, raw_act);
      add(Purpose::Labels, kLabelBytes * samples);
      add(Purpose::Gradient, raw_act);
      add(Purpose::ModelUp, kRawBytesPerElement * g.device_params);
      add(Purpose::ModelDown, kRawBytesPerElement * g.device_params);
      c.device_units = 2 * g.device_macs * samples;
      c.server_units = 2 * g.server_macs * samples;
      break;
    case Method::LocalLossDPFL:
      add(Purpose::Activation, raw_act);
      add(Purpose::Labels, kLabelBytes * samples);
      add(Purpose::ModelUp, kRawBytesPerElement * (g.device_params + g.head_params));
      add(Purpose::ModelDown, kRawBytesPerElement * (g.device_params + g.head_params));
      c.device_units = 2 * (g.device_macs + g.head_macs) * samples;
      c.server_units = 2 * g.server_macs * samples;
      break;
    case Method::ActionFedNoBuffer:
      if (s.quantize) {
        for (std::size_t start = 0; start < n; start += s.batch_size) {
          const std::size_t nb = std::min(s.batch_size, n - start);
          const std::size_t record = qact_record_size(g.activation_rank, g.activation_elems * nb, nb);
          add(Purpose::Activation, record - kLabelBytes * nb);
        }
      } else {
        add(Purpose::Activation, raw_act);
      }
      add(Purpose::Labels, kLabelBytes * samples);
      c.device_units = g.device_macs * samples;
      c.server_units = 2 * g.server_macs * samples;
      break;
    case Method::ActionFedBuffer:
      c.server_units = 2 * g.server_macs * samples;
      break;
  }
  return c;
}

CostRow make_row(Method method, const CostSetting& setting, const Geometry& g) {
  CostRow row;
  row.method = method;
  for (std::size_t n : setting.samples_per_device) {
    row.per_device.push_back(device_cost(method, setting, g, n));
    const auto& d = row.per_device.back();
    for (std::size_t p = 0; p < kPurposeCount; ++p) row.aggregate.bytes_by_purpose[p] += d.bytes_by_purpose[p];
    row.aggregate.device_units += d.device_units;
    row.aggregate.server_units += d.server_units;
  }
  return row;
}

}  // namespace

CostRow comm_bytes_per_round(Method method, const CostSetting& setting) {
  if (setting.batch_size == 0) throw ConfigError("cost model: batch size must be positive");
  return make_row(method, setting, geometry(setting.spec, setting.point));
}

CostReport cost_report(const CostSetting& setting) {
  if (setting.batch_size == 0) throw ConfigError("cost model: batch size must be positive");
  const Geometry g = geometry(setting.spec, setting.point);
  CostReport r;
  r.setting = setting;
  for (Method m : all_methods()) r.rows.push_back(make_row(m, setting, g));
  return r;
}

double cost_ratio(Method a, Method b, const CostSetting& setting) {
  if (setting.batch_size == 0) throw ConfigError("cost model: batch size must be positive");
  const Geometry g = geometry(setting.spec, setting.point);
  const auto num = make_row(a, setting, g).aggregate.total_bytes();
  const auto den = make_row(b, setting, g).aggregate.total_bytes();
  if (den == 0) throw ContractError("cost_ratio: " + std::string(to_string(b)) + " has zero traffic");
  return static_cast<double>(num) / static_cast<double>(den);
}

std::uint64_t computation_units(Method method, const ModelSpec& spec, PartitionPoint point, std::size_t samples) {
  CostSetting s;
  s.spec = spec;
  s.point = point;
  return device_cost(method, s, geometry(spec, point), samples).device_units;
}

std::uint64_t server_units(Method method, const ModelSpec& spec, PartitionPoint point, std::size_t samples) {
  CostSetting s;
  s.spec = spec;
  s.point = point;
  return device_cost(method, s, geometry(spec, point), samples).server_units;
}

std::string format_cost_table(const CostReport& report) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-22s %12s %12s %16s %16s\n", "method", "per-device", "aggregate", "aggregate_bytes",
                "device_MACs");
  os << "model " << report.setting.spec.name << ", K=" << report.setting.samples_per_device.size() << " (GiB)\n" << line;
  for (const auto& r : report.rows) {
    const double per_device = r.per_device.empty() ? 0.0 : to_gib(r.per_device.front().total_bytes());
    std::snprintf(line, sizeof line, "%-22s %12.4f %12.4f %16llu %16llu\n", std::string(to_string(r.method)).c_str(),
                  per_device, to_gib(r.aggregate.total_bytes()),
                  static_cast<unsigned long long>(r.aggregate.total_bytes()),
                  static_cast<unsigned long long>(r.per_device.empty() ? 0 : r.per_device.front().device_units));
    os << line;
  }
  return os.str();
}

std::string format_cost_csv(const CostReport& report) {
  std::ostringstream os;
  os << "model,method,per_device_gib,aggregate_gib,aggregate_bytes,up_bytes,down_bytes,device_macs\n";
  for (const auto& r : report.rows) {
    const double per_device = r.per_device.empty() ? 0.0 : to_gib(r.per_device.front().total_bytes());
    char buf[64];
    os << report.setting.spec.name << ',' << to_string(r.method) << ',';
    std::snprintf(buf, sizeof buf, "%.6f,%.6f", per_device, to_gib(r.aggregate.total_bytes()));
    os << buf << ',' << r.aggregate.total_bytes() << ',' << r.aggregate.up_bytes() << ',' << r.aggregate.down_bytes()
       << ',' << (r.per_device.empty() ? 0 : r.per_device.front().device_units) << '\n';
  }
  return os.str();
}

}  // namespace sfl
