#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "sfl/cost_model.hpp"
#include "sfl/dataset.hpp"
#include "sfl/diagnostics.hpp"
#include "sfl/ledger.hpp"
#include "sfl/netsim.hpp"
#include "sfl/partition.hpp"
#include "sfl/replay_buffer.hpp"
#include "sfl/run_config.hpp"

namespace sfl {

/// Mixes a base seed with stream coordinates (device, round, batch, ...).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

/// Fraction of samples whose argmax prediction matches the label.
double evaluate(const LayerStack<float>& model, const Dataset& data);
/// Partitioned evaluation: device forward then server forward, unquantized.
double evaluate(const ModelHalf<float>& device, const ModelHalf<float>& server, const Dataset& data);

struct DeviceRoundResult {
  std::uint16_t device = 0;
  double server_loss = 0.0;  ///< mean over the round's batches
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
  std::optional<double> epsilon_hat;
  std::optional<double> delta_hat;
  double sim_latency_s = 0.0;
};

struct RoundResult {
  std::size_t round = 0;
  RunMode mode = RunMode::ActionFed;
  bool transmission = true;  ///< ActionFed switch state; true for the other modes
  std::vector<DeviceRoundResult> devices;
  double test_acc = 0.0;
  double train_acc = 0.0;
  LatencyReport latency;
  std::optional<std::size_t> diagnostics_index;
  std::uint64_t server_digest = 0;  ///< global w_S after aggregation
  std::uint64_t device_digest = 0;  ///< global w_C after aggregation
};

struct Estimates {
  double G_hat = 0.0;
  double L_hat = 0.0;
  double F_star = 0.0;
};

struct RunResult {
  RunConfig config;
  ModelSpec spec;
  PartitionPoint point;
  ModelHalf<float> device;
  ModelHalf<float> server;
  LayerStack<float> final_model;  ///< concat(device, server)
  std::vector<RoundResult> rounds;
  TrafficLedger ledger;
  std::vector<DiagnosticsRecord> diagnostics;
  std::optional<Estimates> estimates;
  std::optional<BoundReport> bound;
  double final_train_acc = 0.0;
  double final_test_acc = 0.0;
};

/// State of one training run: data splits, shards with their fixed batch
/// partitions, the global models, replay buffers and the traffic ledger.
///
/// Each round runs one worker per device (at most `threads` at a time), each
/// starting from the global weights and writing to a private ledger shard.
/// Shards are merged in device order at the barrier, then FedAvg runs
/// single-threaded, so results do not depend on scheduling.
class Federation {
 public:
  explicit Federation(RunConfig config);

  /// Dispatches on the configured mode. Rounds must be run in order from 0.
  RoundResult run_round(std::size_t t);
  RoundResult run_round_actionfed(std::size_t t);
  RoundResult run_round_vanilla_dpfl(std::size_t t);
  RoundResult run_round_local_loss(std::size_t t);
  RoundResult run_round_classic_fl(std::size_t t);

  /// Final estimates, bound report and buffer spill; leaves the federation
  /// in a moved-from state.
  RunResult finish();

  const RunConfig& config() const { return config_; }
  const ModelSpec& spec() const { return spec_; }
  PartitionPoint point() const { return point_; }
  const DataSplits& data() const { return data_; }
  const std::vector<Shard>& shards() const { return shards_; }
  const std::vector<std::vector<std::vector<std::size_t>>>& batches() const { return batches_; }
  const ModelHalf<float>& device_model() const { return device_; }
  const ModelHalf<float>& server_model() const { return server_; }
  const LayerStack<float>& auxiliary_head() const { return head_; }
  const std::vector<ReplayBuffer>& buffers() const { return buffers_; }
  const TrafficLedger& ledger() const { return ledger_; }
  const std::vector<DiagnosticsRecord>& diagnostics() const { return records_; }
  const std::vector<RoundResult>& rounds() const { return rounds_; }
  /// Flattened global w_S at the start of each round (diagnostics runs only).
  const std::vector<std::vector<double>>& server_trajectory() const { return trajectory_; }
  /// Cost-model prediction for one device in round t.
  DeviceCost predicted_cost(std::size_t t, std::uint16_t device) const;

 private:
  struct WorkerOutput;

  RoundResult run_mode_round(std::size_t t, RunMode mode);
  WorkerOutput work_actionfed(std::size_t t, std::uint16_t k);
  WorkerOutput work_vanilla(std::size_t t, std::uint16_t k) const;
  WorkerOutput work_local_loss(std::size_t t, std::uint16_t k) const;
  WorkerOutput work_classic(std::size_t t, std::uint16_t k) const;

  Tensor batch_images(std::uint16_t k, std::size_t b, std::size_t t, std::size_t epoch) const;
  Tensor probe_images(std::uint16_t k) const;
  std::vector<Label> probe_labels(std::uint16_t k) const;
  DeviceProbe start_probe(std::uint16_t k) const;
  Method method_for(std::size_t t) const;

  RunConfig config_;
  ModelSpec spec_;
  PartitionPoint point_;
  DataSplits data_;
  std::vector<Shard> shards_;
  std::vector<std::vector<std::vector<std::size_t>>> batches_;
  std::vector<std::vector<std::size_t>> probes_;
  ModelHalf<float> device_;
  ModelHalf<float> server_;
  LayerStack<float> head_;
  std::vector<ReplayBuffer> buffers_;
  TrafficLedger ledger_;
  std::vector<DiagnosticsRecord> records_;
  std::vector<RoundResult> rounds_;
  std::vector<std::vector<double>> trajectory_;
  std::vector<CostRow> cost_rows_;  ///< indexed by Method
  std::size_t next_round_ = 0;
};

/// Runs every round of `config` and finishes. `on_round` (optional) sees each
/// result as it completes. Errors are rethrown with the round and device.
RunResult run_training(const RunConfig& config, const std::function<void(const RoundResult&)>& on_round = {});

}  // namespace sfl
