#include "sfl/run_config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sfl/idx.hpp"

namespace sfl {

using nlohmann::json;

std::string_view to_string(RunMode mode) {
  switch (mode) {
    case RunMode::ClassicFL: return "classic";
    case RunMode::VanillaDPFL: return "vanilla";
    case RunMode::LocalLossDPFL: return "local_loss";
    case RunMode::ActionFed: return "actionfed";
  }
  return "unknown";
}

RunMode parse_run_mode(std::string_view text) {
  for (RunMode m : {RunMode::ClassicFL, RunMode::VanillaDPFL, RunMode::LocalLossDPFL, RunMode::ActionFed}) {
    if (text == to_string(m)) return m;
  }
  throw ConfigError("unknown mode '" + std::string(text) + "' (classic, vanilla, local_loss, actionfed)");
}

void RunConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("config: " + msg);
  };
  need(rounds >= 1, "rounds must be >= 1");
  need(devices >= 1, "devices must be >= 1");
  need(devices <= 65535, "devices must fit a 16-bit device id");
  need(rho >= 1, "rho must be >= 1");
  need(batch_size >= 1, "batch_size must be >= 1");
  need(local_epochs >= 1, "local_epochs must be >= 1");
  need(flip_probability >= 0.0 && flip_probability <= 1.0, "flip_probability must lie in [0, 1]");
  need(pretrain_batch_size >= 1, "pretrain_batch_size must be >= 1");
  need(probe_samples >= 1, "probe_samples must be >= 1");
  need(std::isfinite(smoothness_sigma) && smoothness_sigma > 0.0, "smoothness_sigma must be positive");
  need(data.source == "blobs" || data.source == "idx", "data.source must be 'blobs' or 'idx'");
  if (data.source == "blobs") {
    need(data.classes >= 2, "data.classes must be >= 2");
    need(data.per_class >= 1, "data.per_class must be >= 1");
    need(data.image_shape.size() == 3, "data.image_shape must be [C, H, W]");
    need(data.sigma >= 0.0, "data.sigma must be >= 0");
  } else {
    need(!data.images_path.empty() && !data.labels_path.empty(), "idx data needs images and labels paths");
  }
  need(spill_dir.empty() || (mode == RunMode::ActionFed && quantize),
       "spill_dir needs actionfed mode with quantization on");
  sgd.validate();
  speeds.validate();
  profile_by_name(profile);
}

namespace {

const std::set<std::string> kTopKeys = {
    "schema_version", "mode",         "model",         "partition",        "devices",          "rounds",
    "rho",            "quantize",     "learning_rate", "lr_decay",         "batch_size",       "local_epochs",
    "augment",        "flip_probability", "freeze_device", "pretrain_epochs", "pretrain_batch_size", "seed",
    "data",           "diagnostics",  "probe_samples", "probe_batches",    "smoothness_pairs", "smoothness_sigma",
    "profile",        "device_speed", "server_speed",  "threads",          "spill_dir"};

const std::set<std::string> kDataKeys = {"source", "classes", "per_class", "image_shape", "sigma",
                                         "images", "labels", "pretrain_fraction", "test_fraction"};

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (!known.count(key)) throw ConfigError("config: unknown key '" + where + key + "'");
  }
}

template <typename V>
void read(const json& obj, const char* key, V& out, const std::string& where = "") {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<V>();
  } catch (const json::exception&) {
    throw ConfigError("config: key '" + where + key + "' has the wrong type");
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config: top level must be an object");
  reject_unknown(root, kTopKeys, "");
  if (!root.contains("schema_version")) throw ConfigError("config: missing schema_version");
  int version = 0;
  read(root, "schema_version", version);
  if (version != RunConfig::kSchemaVersion) {
    throw ConfigError("config: schema_version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(RunConfig::kSchemaVersion) + ")");
  }

  RunConfig c;
  std::string mode = std::string(to_string(c.mode));
  read(root, "mode", mode);
  c.mode = parse_run_mode(mode);
  read(root, "model", c.model);
  read(root, "partition", c.partition);
  read(root, "devices", c.devices);
  read(root, "rounds", c.rounds);
  read(root, "rho", c.rho);
  read(root, "quantize", c.quantize);
  read(root, "learning_rate", c.sgd.learning_rate);
  read(root, "lr_decay", c.sgd.decay);
  read(root, "batch_size", c.batch_size);
  read(root, "local_epochs", c.local_epochs);
  read(root, "augment", c.augment);
  read(root, "flip_probability", c.flip_probability);
  read(root, "freeze_device", c.freeze_device);
  read(root, "pretrain_epochs", c.pretrain_epochs);
  read(root, "pretrain_batch_size", c.pretrain_batch_size);
  read(root, "seed", c.seed);
  read(root, "diagnostics", c.diagnostics);
  read(root, "probe_samples", c.probe_samples);
  read(root, "probe_batches", c.probe_batches);
  read(root, "smoothness_pairs", c.smoothness_pairs);
  read(root, "smoothness_sigma", c.smoothness_sigma);
  read(root, "profile", c.profile);
  read(root, "device_speed", c.speeds.device_units_per_s);
  read(root, "server_speed", c.speeds.server_units_per_s);
  read(root, "threads", c.threads);
  read(root, "spill_dir", c.spill_dir);
  if (root.contains("data")) {
    const json& d = root.at("data");
    if (!d.is_object()) throw ConfigError("config: 'data' must be an object");
    reject_unknown(d, kDataKeys, "data.");
    read(d, "source", c.data.source, "data.");
    read(d, "classes", c.data.classes, "data.");
    read(d, "per_class", c.data.per_class, "data.");
    read(d, "image_shape", c.data.image_shape, "data.");
    read(d, "sigma", c.data.sigma, "data.");
    read(d, "images", c.data.images_path, "data.");
    read(d, "labels", c.data.labels_path, "data.");
    read(d, "pretrain_fraction", c.data.pretrain_fraction, "data.");
    read(d, "test_fraction", c.data.test_fraction, "data.");
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string to_json(const RunConfig& c) {
  json d = {{"source", c.data.source},
            {"classes", c.data.classes},
            {"per_class", c.data.per_class},
            {"image_shape", c.data.image_shape},
            {"sigma", c.data.sigma},
            {"pretrain_fraction", c.data.pretrain_fraction},
            {"test_fraction", c.data.test_fraction}};
  if (c.data.source == "idx") {
    d["images"] = c.data.images_path;
    d["labels"] = c.data.labels_path;
  }
  json root = {{"schema_version", RunConfig::kSchemaVersion},
               {"mode", std::string(to_string(c.mode))},
               {"model", c.model},
               {"partition", c.partition},
               {"devices", c.devices},
               {"rounds", c.rounds},
               {"rho", c.rho},
               {"quantize", c.quantize},
               {"learning_rate", c.sgd.learning_rate},
               {"lr_decay", c.sgd.decay},
               {"batch_size", c.batch_size},
               {"local_epochs", c.local_epochs},
               {"augment", c.augment},
               {"flip_probability", c.flip_probability},
               {"freeze_device", c.freeze_device},
               {"pretrain_epochs", c.pretrain_epochs},
               {"pretrain_batch_size", c.pretrain_batch_size},
               {"seed", c.seed},
               {"data", d},
               {"diagnostics", c.diagnostics},
               {"probe_samples", c.probe_samples},
               {"probe_batches", c.probe_batches},
               {"smoothness_pairs", c.smoothness_pairs},
               {"smoothness_sigma", c.smoothness_sigma},
               {"profile", c.profile},
               {"device_speed", c.speeds.device_units_per_s},
               {"server_speed", c.speeds.server_units_per_s},
               {"threads", c.threads}};
  if (!c.spill_dir.empty()) root["spill_dir"] = c.spill_dir;
  return root.dump(2) + "\n";
}

ModelSpec config_spec(const RunConfig& config) {
  Shape input = config.data.image_shape;
  std::size_t classes = config.data.classes;
  if (config.data.source == "idx") {
    // The IDX header decides the geometry; the class count follows the labels.
    const Dataset probe = load_idx(config.data.images_path, config.data.labels_path);
    input = probe.sample_shape();
    classes = probe.num_classes;
  }
  return resolve_spec(config.model, classes, input);
}

PartitionPoint config_partition(const RunConfig& config, const ModelSpec& spec) {
  return config.partition == 0 ? default_partition(spec) : PartitionPoint{config.partition};
}

DataSplits config_data(const RunConfig& config) {
  Dataset pool;
  if (config.data.source == "idx") {
    pool = load_idx(config.data.images_path, config.data.labels_path);
  } else {
    pool = generate_blobs(config.data.classes, config.data.per_class, config.data.image_shape, config.data.sigma,
                          config.seed);
  }
  return split_dataset(pool, config.data.pretrain_fraction, config.data.test_fraction, config.seed + 1);
}

}  // namespace sfl
