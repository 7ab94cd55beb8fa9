#include "sfl/metrics_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

namespace sfl {

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path + "'");
}

std::vector<std::vector<std::string>> read_csv(const std::string& path, const std::string& header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != header) {
    throw FormatError("'" + path + "': expected header '" + header + "'");
  }
  std::size_t columns = 1;
  for (char c : header) columns += c == ',';
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != columns) {
      throw FormatError("'" + path + "' line " + std::to_string(rows.size() + 2) + ": expected " +
                        std::to_string(columns) + " fields, got " + std::to_string(cells.size()));
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

double to_double(const std::string& s, const std::string& path) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::logic_error&) {
  }
  throw FormatError("'" + path + "': not a number: '" + s + "'");
}

std::uint64_t to_u64(const std::string& s, const std::string& path) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used == s.size()) return v;
  } catch (const std::logic_error&) {
  }
  throw FormatError("'" + path + "': not an unsigned integer: '" + s + "'");
}

}  // namespace

std::string format_metrics_csv(const std::vector<RoundResult>& rounds) {
  std::ostringstream os;
  os << kMetricsHeader << '\n';
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& r : rounds) {
    for (const auto& d : r.devices) {
      os << r.round << ',' << d.device << ',' << to_string(r.mode) << ',' << num(d.server_loss) << ','
         << num(r.test_acc) << ',' << d.bytes_up << ',' << d.bytes_down << ',' << num(d.epsilon_hat.value_or(nan))
         << ',' << num(d.delta_hat.value_or(nan)) << ',' << num(d.sim_latency_s) << '\n';
    }
  }
  return os.str();
}

void write_metrics_csv(const std::string& path, const std::vector<RoundResult>& rounds) {
  write_text(path, format_metrics_csv(rounds));
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::vector<MetricsRow> out;
  for (const auto& c : read_csv(path, kMetricsHeader)) {
    MetricsRow r;
    r.round = to_u64(c[0], path);
    r.device = static_cast<std::uint16_t>(to_u64(c[1], path));
    r.mode = c[2];
    r.server_loss = to_double(c[3], path);
    r.test_acc = to_double(c[4], path);
    r.bytes_up = to_u64(c[5], path);
    r.bytes_down = to_u64(c[6], path);
    r.epsilon_hat = to_double(c[7], path);
    r.delta_hat = to_double(c[8], path);
    r.sim_latency_s = to_double(c[9], path);
    out.push_back(std::move(r));
  }
  return out;
}

std::string format_diagnostics_csv(const std::vector<DiagnosticsRecord>& records, const BoundReport* report) {
  std::ostringstream os;
  os << kDiagnosticsHeader << '\n';
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const bool have = report && i < report->rows.size();
    os << r.round << ',' << num(r.eta) << ',' << num(r.grad_norm_sq) << ',' << num(r.eps_mean()) << ','
       << num(r.delta_mean()) << ',' << num(r.loss) << ',' << num(r.gamma) << ','
       << num(have ? report->rows[i].lhs : nan) << ',' << num(have ? report->rows[i].rhs : nan) << '\n';
  }
  return os.str();
}

void write_diagnostics_csv(const std::string& path, const std::vector<DiagnosticsRecord>& records,
                           const BoundReport* report) {
  write_text(path, format_diagnostics_csv(records, report));
}

std::vector<DiagnosticsRecord> read_diagnostics_csv(const std::string& path) {
  std::vector<DiagnosticsRecord> out;
  for (const auto& c : read_csv(path, kDiagnosticsHeader)) {
    DiagnosticsRecord r;
    r.round = to_u64(c[0], path);
    r.eta = to_double(c[1], path);
    r.grad_norm_sq = to_double(c[2], path);
    r.epsilon = {to_double(c[3], path)};
    r.delta = {to_double(c[4], path)};
    r.loss = to_double(c[5], path);
    r.gamma = to_double(c[6], path);
    out.push_back(std::move(r));
  }
  return out;
}

std::string format_estimates_json(const Estimates& e, const BoundReport* report) {
  nlohmann::json j = {{"G_hat", e.G_hat}, {"L_hat", e.L_hat}, {"F_star", e.F_star}};
  if (report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report->rows) {
      rows.push_back({{"T", r.rounds}, {"gamma", r.gamma}, {"lhs", r.lhs}, {"rhs", r.rhs}, {"holds", r.holds()}});
    }
    j["bound"] = rows;
  }
  return j.dump(2) + "\n";
}

void write_estimates_json(const std::string& path, const Estimates& e, const BoundReport* report) {
  write_text(path, format_estimates_json(e, report));
}

Estimates read_estimates_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  try {
    const auto j = nlohmann::json::parse(in);
    Estimates e;
    e.G_hat = j.at("G_hat").get<double>();
    e.L_hat = j.at("L_hat").get<double>();
    e.F_star = j.at("F_star").get<double>();
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError("'" + path + "': " + ex.what());
  }
}

std::string format_bound_report(const BoundReport& report) {
  std::ostringstream os;
  char line[200];
  std::snprintf(line, sizeof line, "G_hat %.6g  L_hat %.6g  F* %.6g  F(w0) %.6g\n", report.G_hat, report.L_hat,
                report.F_star, report.F_initial);
  os << line;
  std::snprintf(line, sizeof line, "%6s %12s %14s %14s %10s %6s\n", "T", "gamma", "lhs", "rhs", "lhs/rhs", "holds");
  os << line;
  for (const auto& r : report.rows) {
    std::snprintf(line, sizeof line, "%6zu %12.6g %14.6g %14.6g %10.4f %6s\n", r.rounds, r.gamma, r.lhs, r.rhs,
                  r.ratio, r.holds() ? "yes" : "NO");
    os << line;
  }
  return os.str();
}

}  // namespace sfl
