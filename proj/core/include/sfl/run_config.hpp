#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "sfl/dataset.hpp"
#include "sfl/model_spec.hpp"
#include "sfl/netsim.hpp"
#include "sfl/sgd.hpp"

namespace sfl {

enum class RunMode { ClassicFL, VanillaDPFL, LocalLossDPFL, ActionFed };

/// "classic", "vanilla", "local_loss", "actionfed".
std::string_view to_string(RunMode mode);
RunMode parse_run_mode(std::string_view text);

struct DataConfig {
  std::string source = "blobs";  ///< "blobs" or "idx"
  std::size_t classes = 2;
  std::size_t per_class = 200;
  Shape image_shape{3, 16, 16};
  double sigma = 0.05;
  std::string images_path;  ///< idx only
  std::string labels_path;  ///< idx only
  double pretrain_fraction = 0.2;
  double test_fraction = 0.2;
};

struct RunConfig {
  static constexpr int kSchemaVersion = 1;

  RunMode mode = RunMode::ActionFed;
  std::string model = "tinyvgg";
  /// Layer index of the offloading point; 0 takes the model's '|' marker.
  std::size_t partition = 0;
  std::size_t devices = 4;
  std::size_t rounds = 30;
  std::uint32_t rho = 2;
  bool quantize = true;
  SgdState sgd{};
  std::size_t batch_size = 20;
  std::size_t local_epochs = 1;
  bool augment = true;
  double flip_probability = 0.5;
  /// Vanilla DPFL only: keep the pretrained device half fixed.
  bool freeze_device = false;
  std::size_t pretrain_epochs = 3;
  std::size_t pretrain_batch_size = 16;
  std::uint64_t seed = 1;
  DataConfig data{};
  bool diagnostics = true;
  std::size_t probe_samples = 16;  ///< per device
  std::size_t probe_batches = 2;   ///< per device, for the buffer distance
  std::size_t smoothness_pairs = 2;  ///< perturbation pairs per trajectory point
  double smoothness_sigma = 1e-2;
  std::string profile = "wifi";
  ComputeSpeeds speeds{};
  std::size_t threads = 0;  ///< 0: one worker per device
  std::string spill_dir;    ///< ActionFed: write the replay buffers here at the end

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// JSON with a "schema_version" field; unknown keys are rejected.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string to_json(const RunConfig& config);

/// Model spec sized to the configured data (classes, image shape).
ModelSpec config_spec(const RunConfig& config);
PartitionPoint config_partition(const RunConfig& config, const ModelSpec& spec);
/// Generates or loads the data and splits it into pretrain/train/test.
DataSplits config_data(const RunConfig& config);

}  // namespace sfl
