#include "sfl_cli/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <regex>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "sfl/checkpoint.hpp"
#include "sfl/cost_model.hpp"
#include "sfl/idx.hpp"
#include "sfl/metrics_io.hpp"
#include "sfl/netsim.hpp"
#include "sfl/run_config.hpp"
#include "sfl/runtime.hpp"

namespace sfl::cli {

namespace {

void setup_logging() {
  auto logger = spdlog::get("sfl");
  if (!logger) {
    logger = spdlog::stderr_color_mt("sfl");
    spdlog::set_default_logger(logger);
  }
  spdlog::level::level_enum level = spdlog::level::info;
  if (const char* env = std::getenv("SFL_LOG_LEVEL")) {
    const std::string name(env);
    const auto parsed = spdlog::level::from_str(name);
    if (parsed != spdlog::level::off || name == "off") level = parsed;
  }
  logger->set_level(level);
}

struct RunArgs {
  std::string config;
  std::string out = "sfl_out";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> profile;
  std::optional<std::size_t> rounds;
  std::optional<std::size_t> threads;
};

struct CostArgs {
  std::string model = "vgg11";
  std::string setting = "cifar10-k5";
  std::optional<std::size_t> devices;
  std::optional<std::size_t> samples;
  std::size_t batch = 100;
  bool no_quantize = false;
  bool csv_only = false;
  std::optional<std::string> profile;
  std::string out;
};

struct GenArgs {
  std::size_t classes = 2;
  std::size_t per_class = 100;
  std::size_t size = 16;
  double sigma = 0.05;
  std::uint64_t seed = 1;
  std::string out = "data";
};

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f << text;
}

int cmd_run(const RunArgs& a, std::ostream& out) {
  RunConfig cfg = load_run_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  if (a.profile) cfg.profile = *a.profile;
  if (a.rounds) cfg.rounds = *a.rounds;
  if (a.threads) cfg.threads = *a.threads;
  cfg.validate();

  const std::filesystem::path dir(a.out);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + a.out + "': " + ec.message());

  spdlog::info("run: mode={} model={} K={} T={} rho={} quantize={} seed={}", to_string(cfg.mode), cfg.model,
               cfg.devices, cfg.rounds, cfg.rho, cfg.quantize, cfg.seed);
  const RunResult result = run_training(cfg, [](const RoundResult& r) {
    double loss = 0.0;
    std::uint64_t up = 0, down = 0;
    for (const auto& d : r.devices) {
      loss += d.server_loss;
      up += d.bytes_up;
      down += d.bytes_down;
    }
    spdlog::info("round {:>3}: loss {:.4f} train_acc {:.4f} test_acc {:.4f} up {} B down {} B latency {:.4f} s",
                 r.round, loss / static_cast<double>(r.devices.size()), r.train_acc, r.test_acc, up, down,
                 r.latency.round_s);
  });

  write_metrics_csv((dir / "metrics.csv").string(), result.rounds);
  write_text(dir / "config.json", to_json(result.config));
  save_checkpoint((dir / "model.sfl").string(), result.final_model);
  const BoundReport* bound = result.bound ? &*result.bound : nullptr;
  if (!result.diagnostics.empty()) {
    write_diagnostics_csv((dir / "diagnostics.csv").string(), result.diagnostics, bound);
  }
  if (result.estimates) write_estimates_json((dir / "estimates.json").string(), *result.estimates, bound);
  if (bound) {
    write_text(dir / "bound_report.txt", format_bound_report(*bound));
    const bool all_hold =
        std::all_of(bound->rows.begin(), bound->rows.end(), [](const BoundRow& r) { return r.holds(); });
    if (!all_hold) spdlog::warn("bound check: LHS exceeds RHS for some T (see bound_report.txt)");
  }
  out << "final train accuracy " << result.final_train_acc << "\n"
      << "final test accuracy " << result.final_test_acc << "\n"
      << "total traffic " << result.ledger.total() << " bytes\n"
      << "outputs in " << dir.string() << "\n";
  return kExitOk;
}

CostSetting cost_setting(const CostArgs& a) {
  static const std::regex pattern(R"(cifar10-k(\d+))");
  std::smatch m;
  if (!std::regex_match(a.setting, m, pattern)) {
    throw ConfigError("unknown cost setting '" + a.setting + "' (expected cifar10-k<K>)");
  }
  CostSetting s = reference_setting(a.model);
  const std::size_t k = a.devices.value_or(std::stoul(m[1].str()));
  if (k == 0) throw ConfigError("cost setting needs at least one device");
  s.samples_per_device.assign(k, a.samples.value_or(50000 / k));
  s.batch_size = a.batch;
  s.quantize = !a.no_quantize;
  return s;
}

int cmd_cost(const CostArgs& a, std::ostream& out) {
  const CostReport report = cost_report(cost_setting(a));
  const std::string csv = format_cost_csv(report);
  if (!a.out.empty()) write_text(a.out, csv);
  if (a.csv_only) {
    out << csv;
    return kExitOk;
  }
  out << format_cost_table(report) << '\n';
  const auto af = report.row(Method::ActionFedNoBuffer).aggregate.total_bytes();
  auto ratio = [&](Method m) {
    if (af == 0) throw ContractError("cost ratio: ActionFed w/o buffer has zero traffic");
    return static_cast<double>(report.row(m).aggregate.total_bytes()) / static_cast<double>(af);
  };
  char line[160];
  std::snprintf(line, sizeof line, "SplitFed / ActionFed w/o buffer = %.3f\nLGL / ActionFed w/o buffer = %.3f\n",
                ratio(Method::VanillaDPFL), ratio(Method::LocalLossDPFL));
  out << line;
  if (a.profile) {
    const NetworkProfile p = profile_by_name(*a.profile);
    out << "\nper-device transfer time on " << p.name << " (" << p.up_mbps << "/" << p.down_mbps << " Mbps)\n";
    for (const auto& r : report.rows) {
      const auto& d = r.per_device.front();
      std::snprintf(line, sizeof line, "%-22s up %10.3f s  down %10.3f s\n", std::string(to_string(r.method)).c_str(),
                    transfer_time(d.up_bytes(), Direction::Up, p), transfer_time(d.down_bytes(), Direction::Down, p));
      out << line;
    }
  }
  out << '\n' << csv;
  return kExitOk;
}

int cmd_diagnose(const std::string& dir_arg, std::ostream& out) {
  const std::filesystem::path dir(dir_arg);
  const auto records = read_diagnostics_csv((dir / "diagnostics.csv").string());
  const Estimates est = read_estimates_json((dir / "estimates.json").string());
  const BoundReport report = bound_report(records, est.G_hat, est.L_hat, est.F_star);
  out << format_bound_report(report);
  const std::size_t failing = static_cast<std::size_t>(
      std::count_if(report.rows.begin(), report.rows.end(), [](const BoundRow& r) { return !r.holds(); }));
  if (failing) {
    spdlog::warn("bound check: LHS > RHS at {} of {} prefixes (estimates are sampled, not suprema)", failing,
                 report.rows.size());
  }
  return kExitOk;
}

int cmd_gen_data(const GenArgs& a, std::ostream& out) {
  const Dataset ds = generate_blobs(a.classes, a.per_class, {1, a.size, a.size}, a.sigma, a.seed);
  const std::filesystem::path dir(a.out);
  std::filesystem::create_directories(dir);
  const auto images = (dir / "images.idx").string();
  const auto labels = (dir / "labels.idx").string();
  write_idx(ds, images, labels);
  out << "wrote " << ds.size() << " samples to " << images << " and " << labels << "\n";
  return kExitOk;
}

}  // namespace

int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Split federated learning simulator", "sfl"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Train from a JSON config and write metrics");
  run->add_option("--config", run_args.config, "Run config (JSON)")->required();
  run->add_option("--out", run_args.out, "Output directory");
  run->add_option("--seed", run_args.seed, "Override the config seed");
  run->add_option("--profile", run_args.profile, "Network profile: wifi, 4g, 3g or UP/DOWN Mbps");
  run->add_option("--rounds", run_args.rounds, "Override the number of rounds");
  run->add_option("--threads", run_args.threads, "Worker threads (0: one per device)");

  CostArgs cost_args;
  auto* cost = app.add_subcommand("cost", "Per-round communication cost table");
  cost->add_option("--model", cost_args.model, "vgg11, resnet9, tinyvgg, tinyres");
  cost->add_option("--setting", cost_args.setting, "cifar10-k<K>");
  cost->add_option("--devices", cost_args.devices, "Override K");
  cost->add_option("--samples", cost_args.samples, "Override samples per device");
  cost->add_option("--batch", cost_args.batch, "Batch size (ActionFed record headers)");
  cost->add_flag("--no-quantize", cost_args.no_quantize, "32-bit activations for ActionFed");
  cost->add_flag("--csv", cost_args.csv_only, "CSV only");
  cost->add_option("--profile", cost_args.profile, "Also print transfer times on this profile");
  cost->add_option("--out", cost_args.out, "Write the CSV table to this file");

  std::string diag_dir;
  auto* diagnose = app.add_subcommand("diagnose", "Bound report from a run's output directory");
  diagnose->add_option("dir", diag_dir, "Directory written by `sfl run`")->required();

  GenArgs gen_args;
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic single-channel dataset as IDX files");
  gen->add_option("--classes", gen_args.classes);
  gen->add_option("--per-class", gen_args.per_class);
  gen->add_option("--size", gen_args.size, "Image height and width");
  gen->add_option("--sigma", gen_args.sigma);
  gen->add_option("--seed", gen_args.seed);
  gen->add_option("--out", gen_args.out, "Output directory");

  auto* selftest = app.add_subcommand("selftest", "Run the built-in invariant checks");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  setup_logging();
  try {
    if (run->parsed()) return cmd_run(run_args, out);
    if (cost->parsed()) return cmd_cost(cost_args, out);
    if (diagnose->parsed()) return cmd_diagnose(diag_dir, out);
    if (gen->parsed()) return cmd_gen_data(gen_args, out);
    if (selftest->parsed()) return run_selftest(out) == 0 ? kExitOk : kExitFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(e.category());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace sfl::cli
