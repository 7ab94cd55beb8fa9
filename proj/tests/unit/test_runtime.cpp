#include <gtest/gtest.h>

#include <filesystem>

#include "sfl/runtime.hpp"

using namespace sfl;

namespace {

RunConfig small_config(RunMode mode) {
  RunConfig c;
  c.mode = mode;
  c.devices = 3;
  c.rounds = 4;
  c.rho = 2;
  c.batch_size = 8;
  c.pretrain_epochs = 1;
  c.sgd.learning_rate = 0.05;
  c.data.per_class = 30;
  c.data.image_shape = {3, 8, 8};
  c.probe_samples = 4;
  c.probe_batches = 1;
  c.smoothness_pairs = 1;
  return c;
}

void expect_ledger_matches_prediction(const Federation& fed, std::size_t rounds) {
  for (std::size_t t = 0; t < rounds; ++t) {
    for (std::uint16_t k = 0; k < fed.config().devices; ++k) {
      const DeviceCost want = fed.predicted_cost(t, k);
      for (std::size_t p = 0; p < kPurposeCount; ++p) {
        const auto purpose = static_cast<Purpose>(p);
        EXPECT_EQ(fed.ledger().total({static_cast<std::uint32_t>(t), k, {}, purpose}), want.bytes(purpose))
            << to_string(fed.config().mode) << " round " << t << " device " << k << " " << to_string(purpose);
      }
    }
  }
}

std::vector<std::uint64_t> server_digests(const std::vector<RoundResult>& rounds) {
  std::vector<std::uint64_t> d;
  for (const auto& r : rounds) d.push_back(r.server_digest);
  return d;
}

}  // namespace

TEST(Runtime, DeriveSeedSeparatesStreams) {
  EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 3, 2));
  EXPECT_NE(derive_seed(1, 2), derive_seed(2, 2));
}

TEST(Runtime, EvaluateExamplesAndPartitionedAgreement) {
  LayerStack<float> ident{Layer<float>::flatten(), Layer<float>::dense(2, 2)};
  ident[1].params[0] = Tensor({2, 2}, std::vector<float>{1, 0, 0, 1});
  ident[1].params[1] = Tensor({2}, 0.0f);
  Dataset ds;
  ds.images = Tensor({4, 1, 1, 2}, std::vector<float>{1, 0, 0, 1, 1, 0, 0, 1});
  ds.labels = {0, 1, 1, 1};
  ds.num_classes = 2;
  EXPECT_DOUBLE_EQ(evaluate(ident, ds), 0.75);
  EXPECT_THROW(evaluate(ident, Dataset{}), ContractError);

  Federation fed(small_config(RunMode::ActionFed));
  const auto whole = concat_weights(fed.device_model(), fed.server_model());
  EXPECT_DOUBLE_EQ(evaluate(whole, fed.data().test), evaluate(fed.device_model(), fed.server_model(), fed.data().test));
  EXPECT_THROW(evaluate(fed.server_model(), fed.device_model(), fed.data().test), ContractError);
}

TEST(Runtime, ShardsCoverTrainSplit) {
  Federation fed(small_config(RunMode::ActionFed));
  std::size_t total = 0;
  for (std::size_t k = 0; k < fed.shards().size(); ++k) {
    total += fed.shards()[k].indices.size();
    std::size_t batched = 0;
    for (const auto& b : fed.batches()[k]) batched += b.size();
    EXPECT_EQ(batched, fed.shards()[k].indices.size());
  }
  EXPECT_EQ(total, fed.data().train.size());
}

TEST(Runtime, ActionFedTrafficContract) {
  Federation fed(small_config(RunMode::ActionFed));
  const auto device_digest = weights_digest(fed.device_model().layers);
  for (std::size_t t = 0; t < 4; ++t) {
    const auto r = fed.run_round_actionfed(t);
    EXPECT_EQ(r.transmission, t % 2 == 0);
    EXPECT_EQ(r.device_digest, device_digest);
    for (const auto& d : r.devices) {
      EXPECT_EQ(d.bytes_down, 0u);
      if (t % 2 == 1) {
        EXPECT_EQ(d.bytes_up, 0u);
      } else {
        EXPECT_GT(d.bytes_up, 0u);
      }
    }
  }
  const auto& L = fed.ledger();
  EXPECT_EQ(L.total({{}, {}, {}, Purpose::Gradient}), 0u);
  EXPECT_EQ(L.total({{}, {}, {}, Purpose::ModelUp}) + L.total({{}, {}, {}, Purpose::ModelDown}), 0u);
  expect_ledger_matches_prediction(fed, 4);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(fed.buffers()[k].size(), fed.batches()[k].size());
}

TEST(Runtime, ActivationBytesFollowCeilLaw) {
  for (std::uint32_t rho : {1u, 3u}) {
    auto c = small_config(RunMode::ActionFed);
    c.rho = rho;
    c.rounds = 5;
    c.diagnostics = false;
    const auto result = run_training(c);
    const auto per_round = result.ledger.total({0, {}, {}, {}});
    EXPECT_EQ(result.ledger.total(), per_round * transmission_rounds(5, rho)) << "rho " << rho;
  }
}

TEST(Runtime, VanillaTrafficContract) {
  Federation fed(small_config(RunMode::VanillaDPFL));
  std::uint64_t last = weights_digest(fed.device_model().layers);
  for (std::size_t t = 0; t < 2; ++t) {
    const auto r = fed.run_round_vanilla_dpfl(t);
    EXPECT_NE(r.device_digest, last);
    last = r.device_digest;
    for (const auto& d : r.devices) EXPECT_GT(d.bytes_down, 0u);
  }
  const auto& L = fed.ledger();
  EXPECT_EQ(L.total({{}, {}, {}, Purpose::Gradient}), L.total({{}, {}, {}, Purpose::Activation}));
  expect_ledger_matches_prediction(fed, 2);
}

TEST(Runtime, LocalLossTrafficContract) {
  Federation fed(small_config(RunMode::LocalLossDPFL));
  ASSERT_FALSE(fed.auxiliary_head().empty());
  const auto head = weights_digest(fed.auxiliary_head());
  fed.run_round_local_loss(0);
  fed.run_round_local_loss(1);
  EXPECT_NE(weights_digest(fed.auxiliary_head()), head);
  EXPECT_EQ(fed.ledger().total({{}, {}, {}, Purpose::Gradient}), 0u);
  EXPECT_GT(fed.ledger().total({{}, {}, Direction::Down, Purpose::ModelDown}), 0u);
  expect_ledger_matches_prediction(fed, 2);
}

TEST(Runtime, ClassicTrafficContract) {
  Federation fed(small_config(RunMode::ClassicFL));
  fed.run_round_classic_fl(0);
  const auto& L = fed.ledger();
  EXPECT_EQ(L.total({{}, {}, {}, Purpose::ModelUp}) + L.total({{}, {}, {}, Purpose::ModelDown}), L.total());
  expect_ledger_matches_prediction(fed, 1);
}

TEST(Runtime, RoundOrderAndModeEnforced) {
  Federation fed(small_config(RunMode::ActionFed));
  EXPECT_THROW(fed.run_round(1), ContractError);
  EXPECT_THROW(fed.run_round_vanilla_dpfl(0), ContractError);
  fed.run_round(0);
  EXPECT_THROW(fed.run_round(0), ContractError);
}

TEST(Runtime, ConfigErrorsSurfaceAtConstruction) {
  auto c = small_config(RunMode::ActionFed);
  c.devices = 500;
  EXPECT_THROW(Federation{c}, ConfigError);
  c = small_config(RunMode::VanillaDPFL);
  c.spill_dir = "/tmp/x";
  EXPECT_THROW(Federation{c}, ConfigError);
}

TEST(Runtime, UnquantizedSingleRhoActionFedEqualsFrozenVanilla) {
  auto a = small_config(RunMode::ActionFed);
  a.rho = 1;
  a.quantize = false;
  a.diagnostics = false;
  auto v = small_config(RunMode::VanillaDPFL);
  v.freeze_device = true;
  v.diagnostics = false;
  const auto ra = run_training(a);
  const auto rv = run_training(v);
  EXPECT_EQ(server_digests(ra.rounds), server_digests(rv.rounds));
  EXPECT_EQ(ra.final_model, rv.final_model);
}

TEST(Runtime, DeterministicAcrossThreadCounts) {
  auto c = small_config(RunMode::ActionFed);
  c.threads = 1;
  const auto one = run_training(c);
  c.threads = 0;
  const auto many = run_training(c);
  EXPECT_EQ(server_digests(one.rounds), server_digests(many.rounds));
  EXPECT_EQ(one.ledger.records(), many.ledger.records());
  for (std::size_t t = 0; t < one.rounds.size(); ++t) {
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_EQ(one.rounds[t].devices[k].server_loss, many.rounds[t].devices[k].server_loss);
    }
  }
}

TEST(Runtime, DiagnosticsDoNotPerturbTraining) {
  auto c = small_config(RunMode::ActionFed);
  const auto with = run_training(c);
  c.diagnostics = false;
  const auto without = run_training(c);
  EXPECT_EQ(server_digests(with.rounds), server_digests(without.rounds));
  EXPECT_EQ(with.diagnostics.size(), 4u);
  EXPECT_TRUE(without.diagnostics.empty());
  EXPECT_FALSE(without.estimates.has_value());
}

TEST(Runtime, ZeroLearningRateKeepsWeights) {
  for (RunMode mode : {RunMode::ActionFed, RunMode::VanillaDPFL, RunMode::ClassicFL}) {
    auto c = small_config(mode);
    c.sgd.learning_rate = 0.0;
    c.rounds = 2;
    c.diagnostics = false;
    Federation fed(c);
    const auto before = concat_weights(fed.device_model(), fed.server_model());
    fed.run_round(0);
    fed.run_round(1);
    EXPECT_EQ(concat_weights(fed.device_model(), fed.server_model()), before) << to_string(mode);
  }
}

TEST(Runtime, SingleDeviceClassicIsCentralSgd) {
  auto c = small_config(RunMode::ClassicFL);
  c.devices = 1;
  c.rounds = 3;
  const auto r = run_training(c);
  ASSERT_EQ(r.rounds.size(), 3u);
  EXPECT_NE(r.rounds[0].server_digest, r.rounds[2].server_digest);
  EXPECT_EQ(r.ledger.total({{}, {}, Direction::Up, {}}), r.ledger.total({{}, {}, Direction::Down, {}}));
}

TEST(Runtime, DiagnosticsRecordsAreConsistent) {
  auto c = small_config(RunMode::ActionFed);
  c.sgd.decay = 0.5;
  const auto r = run_training(c);
  ASSERT_EQ(r.diagnostics.size(), 4u);
  double gamma = 0.0;
  for (std::size_t t = 0; t < 4; ++t) {
    const auto& d = r.diagnostics[t];
    gamma += c.sgd.rate_at(t);
    EXPECT_DOUBLE_EQ(d.eta, c.sgd.rate_at(t));
    EXPECT_NEAR(d.gamma, gamma, 1e-12);
    EXPECT_EQ(d.epsilon.size(), 3u);
    for (double e : d.epsilon) EXPECT_GT(e, 0.0);
    // Transmission rounds see only quantization noise in the buffer.
    for (double dl : d.delta) EXPECT_GT(dl, 0.0);
    EXPECT_GT(d.update_norm, 0.0);
    EXPECT_EQ(r.rounds[t].devices[0].epsilon_hat, d.epsilon[0]);
  }
  ASSERT_TRUE(r.estimates && r.bound);
  EXPECT_GT(r.estimates->G_hat, 0.0);
  EXPECT_GT(r.estimates->L_hat, 0.0);
  EXPECT_EQ(r.bound->rows.size(), 4u);
}

TEST(Runtime, SpillWritesBufferFiles) {
  auto c = small_config(RunMode::ActionFed);
  c.rounds = 1;
  c.diagnostics = false;
  const auto dir = std::filesystem::temp_directory_path() / "sfl_runtime_spill";
  std::filesystem::remove_all(dir);
  c.spill_dir = dir.string();
  const auto r = run_training(c);
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++files;
  std::filesystem::remove_all(dir);
  std::size_t batches = 0;
  Federation fed(c);
  for (const auto& b : fed.batches()) batches += b.size();
  EXPECT_EQ(files, batches);
}

TEST(Runtime, PretrainingBeatsRandomDeviceHalf) {
  RunConfig c;
  c.rounds = 3;
  c.sgd.learning_rate = 0.1;
  c.diagnostics = false;
  const auto pretrained = run_training(c);
  c.pretrain_epochs = 0;
  const auto random = run_training(c);
  EXPECT_GT(pretrained.final_test_acc, random.final_test_acc);
}

TEST(Runtime, WindowedServerLossDoesNotRise) {
  RunConfig c;
  c.rounds = 20;
  c.sgd.learning_rate = 0.1;
  c.diagnostics = false;
  const auto r = run_training(c);
  auto window = [&](std::size_t from) {
    double s = 0.0;
    for (std::size_t t = from; t < from + 10; ++t) {
      for (const auto& d : r.rounds[t].devices) s += d.server_loss;
    }
    return s;
  };
  EXPECT_LE(window(10), window(0) * 1.05);
}
