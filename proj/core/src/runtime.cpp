#include "sfl/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <random>
#include <thread>

#include "sfl/fedavg.hpp"
#include "sfl/loss.hpp"

namespace sfl {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  auto mix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  };
  std::uint64_t h = mix(base);
  h = mix(h ^ a);
  h = mix(h ^ b);
  return mix(h ^ c);
}

namespace {

constexpr std::size_t kEvalBatch = 256;

template <typename Fn>
double accuracy(const Dataset& data, Fn&& logits_of) {
  if (data.size() == 0) throw ContractError("evaluate: empty dataset");
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += kEvalBatch) {
    const std::size_t n = std::min(kEvalBatch, data.size() - start);
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), start);
    const auto predicted = argmax_rows(logits_of(gather_images(data, idx)));
    for (std::size_t i = 0; i < n; ++i) correct += predicted[i] == data.labels[start + i];
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

void set_trainable(LayerStack<float>& layers, bool trainable) {
  for (auto& l : layers) l.trainable = trainable;
}

}  // namespace

double evaluate(const LayerStack<float>& model, const Dataset& data) {
  return accuracy(data, [&](const Tensor& x) { return predict(model, x); });
}

double evaluate(const ModelHalf<float>& device, const ModelHalf<float>& server, const Dataset& data) {
  if (device.side != Side::Device || server.side != Side::Server) {
    throw ContractError("evaluate: halves passed in the wrong order");
  }
  return accuracy(data, [&](const Tensor& x) { return predict(server.layers, predict(device.layers, x)); });
}

struct Federation::WorkerOutput {
  TrafficLedger shard;
  LayerStack<float> server;
  LayerStack<float> device;
  LayerStack<float> head;
  double loss_sum = 0.0;
  std::size_t batches = 0;
  std::optional<DeviceProbe> probe;
};

Federation::Federation(RunConfig config) : config_(std::move(config)) {
  config_.validate();
  spec_ = config_spec(config_);
  point_ = config_partition(config_, spec_);
  data_ = config_data(config_);
  if (data_.train.size() < config_.devices) {
    throw ConfigError("config: " + std::to_string(data_.train.size()) + " training samples cannot feed " +
                      std::to_string(config_.devices) + " devices");
  }
  if (data_.test.size() == 0) throw ConfigError("config: the test split is empty");

  const auto init = build_model<float>(spec_, derive_seed(config_.seed, 0x5e));
  auto halves = partition(spec_, init, point_);
  server_ = std::move(halves.server);
  if (config_.pretrain_epochs > 0) {
    PretrainOptions opts;
    opts.epochs = config_.pretrain_epochs;
    opts.batch_size = config_.pretrain_batch_size;
    opts.sgd.learning_rate = config_.sgd.learning_rate;
    opts.seed = derive_seed(config_.seed, 0x9e);
    device_ = pretrain_device_side(spec_, point_, data_.pretrain, opts);
  } else {
    device_ = std::move(halves.device);
    freeze(device_.layers);
  }
  const bool device_trains = config_.mode == RunMode::ClassicFL || config_.mode == RunMode::LocalLossDPFL ||
                             (config_.mode == RunMode::VanillaDPFL && !config_.freeze_device);
  set_trainable(device_.layers, device_trains);
  if (config_.mode == RunMode::LocalLossDPFL) {
    head_ = make_auxiliary_head<float>(device_output_shape(spec_, point_), spec_.num_classes,
                                       derive_seed(config_.seed, 0x4d));
  }

  shards_ = shard_uniform(data_.train.size(), config_.devices, derive_seed(config_.seed, 0x5d));
  for (const auto& s : shards_) {
    batches_.push_back(make_batches(s, config_.batch_size));
    std::vector<std::size_t> probe = s.indices;
    std::mt19937_64 rng(derive_seed(config_.seed, 0x9b, s.device_id));
    std::shuffle(probe.begin(), probe.end(), rng);
    probe.resize(std::min(probe.size(), config_.probe_samples));
    probes_.push_back(std::move(probe));
  }
  if (config_.mode == RunMode::ActionFed) buffers_.assign(config_.devices, ReplayBuffer(ActivationSwitch(config_.rho)));

  CostSetting setting;
  setting.spec = spec_;
  setting.point = point_;
  setting.batch_size = config_.batch_size;
  setting.quantize = config_.quantize;
  for (const auto& s : shards_) setting.samples_per_device.push_back(s.indices.size());
  for (Method m : all_methods()) cost_rows_.push_back(comm_bytes_per_round(m, setting));
}

Method Federation::method_for(std::size_t t) const {
  switch (config_.mode) {
    case RunMode::ClassicFL: return Method::ClassicFL;
    case RunMode::VanillaDPFL: return Method::VanillaDPFL;
    case RunMode::LocalLossDPFL: return Method::LocalLossDPFL;
    case RunMode::ActionFed:
      return switch_is_on(t, config_.rho) ? Method::ActionFedNoBuffer : Method::ActionFedBuffer;
  }
  return Method::ClassicFL;
}

DeviceCost Federation::predicted_cost(std::size_t t, std::uint16_t device) const {
  const Method m = method_for(t);
  DeviceCost c = cost_rows_.at(static_cast<std::size_t>(m)).per_device.at(device);
  const std::uint64_t epochs = config_.local_epochs;
  auto& bytes = c.bytes_by_purpose;
  switch (m) {
    case Method::VanillaDPFL:
    case Method::LocalLossDPFL:
      for (Purpose p : {Purpose::Activation, Purpose::Labels, Purpose::Gradient}) bytes[static_cast<std::size_t>(p)] *= epochs;
      c.device_units *= epochs;
      c.server_units *= epochs;
      break;
    case Method::ClassicFL:
      c.device_units *= epochs;
      break;
    case Method::ActionFedNoBuffer:
    case Method::ActionFedBuffer:
      c.server_units *= epochs;
      break;
  }
  return c;
}

Tensor Federation::batch_images(std::uint16_t k, std::size_t b, std::size_t t, std::size_t epoch) const {
  Tensor x = gather_images(data_.train, batches_[k][b]);
  if (config_.augment) {
    std::uint64_t s = derive_seed(config_.seed, k, t, b);
    if (epoch > 0) s = derive_seed(s, epoch);
    std::mt19937_64 rng(s);
    augment_hflip(x, config_.flip_probability, rng);
  }
  return x;
}

Tensor Federation::probe_images(std::uint16_t k) const { return gather_images(data_.train, probes_[k]); }

std::vector<Label> Federation::probe_labels(std::uint16_t k) const { return gather_labels(data_.train, probes_[k]); }

DeviceProbe Federation::start_probe(std::uint16_t k) const {
  DeviceProbe p;
  p.device = k;
  const Tensor a = predict(device_.layers, probe_images(k));
  const auto labels = probe_labels(k);
  p.gradient = probe_gradient(server_.layers, a, labels);
  p.quantization = quantization_error(a, labels, server_.layers, config_.mode == RunMode::ActionFed && config_.quantize);
  return p;
}

Federation::WorkerOutput Federation::work_actionfed(std::size_t t, std::uint16_t k) {
  WorkerOutput out;
  out.server = server_.layers;
  if (config_.diagnostics) out.probe = start_probe(k);
  const double eta = config_.sgd.rate_at(t);
  const bool on = switch_is_on(t, config_.rho);
  ReplayBuffer& buffer = buffers_[k];
  const auto round = static_cast<std::uint32_t>(t);
  for (std::size_t e = 0; e < config_.local_epochs; ++e) {
    for (std::size_t b = 0; b < batches_[k].size(); ++b) {
      const auto batch = static_cast<std::uint32_t>(b);
      if (on && e == 0) {
        const Tensor a = predict(device_.layers, batch_images(k, b, t, 0));
        auto labels = gather_labels(data_.train, batches_[k][b]);
        const std::uint64_t label_bytes = kLabelBytes * labels.size();
        ActivationRecord record;
        if (config_.quantize) {
          QuantizedActivation z = quantize(a);
          z.labels = std::move(labels);
          z.round_tag = round;
          z.device_id = k;
          z.batch_index = batch;
          record = std::move(z);
        } else {
          record = RawActivation{a, std::move(labels), round, k, batch};
        }
        out.shard.append({round, k, Direction::Up, Purpose::Activation, record_bytes(record) - label_bytes});
        out.shard.append({round, k, Direction::Up, Purpose::Labels, label_bytes});
        buffer.store(std::move(record));
      }
      const ActivationRecord& cached = buffer.fetch(k, batch);
      const Tensor a_hat = decode(cached);
      const auto trace = forward(out.server, a_hat);
      const auto loss = softmax_cross_entropy(trace.output(), labels(cached));
      sgd_step(out.server, backward(out.server, trace, loss.grad), eta);
      out.loss_sum += loss.loss;
      ++out.batches;
    }
  }
  if (out.probe) {
    std::vector<FreshActivation> fresh;
    for (std::size_t b = 0; b < std::min(config_.probe_batches, batches_[k].size()); ++b) {
      fresh.push_back({k, static_cast<std::uint32_t>(b), predict(device_.layers, batch_images(k, b, t, 0))});
    }
    out.probe->delta = buffer_distance_proxy(buffer, fresh);
  }
  return out;
}

Federation::WorkerOutput Federation::work_vanilla(std::size_t t, std::uint16_t k) const {
  WorkerOutput out;
  out.server = server_.layers;
  out.device = device_.layers;
  if (config_.diagnostics) out.probe = start_probe(k);
  const double eta = config_.sgd.rate_at(t);
  const auto round = static_cast<std::uint32_t>(t);
  const std::uint64_t model_bytes = kRawBytesPerElement * parameter_count(out.device);
  out.shard.append({round, k, Direction::Down, Purpose::ModelDown, model_bytes});
  for (std::size_t e = 0; e < config_.local_epochs; ++e) {
    for (std::size_t b = 0; b < batches_[k].size(); ++b) {
      const auto labels = gather_labels(data_.train, batches_[k][b]);
      const auto device_trace = forward(out.device, batch_images(k, b, t, e));
      const Tensor& a = device_trace.output();
      out.shard.append({round, k, Direction::Up, Purpose::Activation, kRawBytesPerElement * a.size()});
      out.shard.append({round, k, Direction::Up, Purpose::Labels, kLabelBytes * labels.size()});
      const auto trace = forward(out.server, a);
      const auto loss = softmax_cross_entropy(trace.output(), labels);
      const auto server_grads = backward(out.server, trace, loss.grad);
      sgd_step(out.server, server_grads, eta);
      out.shard.append({round, k, Direction::Down, Purpose::Gradient, kRawBytesPerElement * server_grads.input.size()});
      sgd_step(out.device, backward(out.device, device_trace, server_grads.input), eta);
      out.loss_sum += loss.loss;
      ++out.batches;
    }
  }
  out.shard.append({round, k, Direction::Up, Purpose::ModelUp, model_bytes});
  return out;
}

Federation::WorkerOutput Federation::work_local_loss(std::size_t t, std::uint16_t k) const {
  WorkerOutput out;
  out.server = server_.layers;
  out.device = device_.layers;
  out.head = head_;
  if (config_.diagnostics) out.probe = start_probe(k);
  const double eta = config_.sgd.rate_at(t);
  const auto round = static_cast<std::uint32_t>(t);
  const std::uint64_t model_bytes = kRawBytesPerElement * (parameter_count(out.device) + parameter_count(out.head));
  out.shard.append({round, k, Direction::Down, Purpose::ModelDown, model_bytes});
  for (std::size_t e = 0; e < config_.local_epochs; ++e) {
    for (std::size_t b = 0; b < batches_[k].size(); ++b) {
      const auto labels = gather_labels(data_.train, batches_[k][b]);
      const auto device_trace = forward(out.device, batch_images(k, b, t, e));
      const Tensor& a = device_trace.output();
      out.shard.append({round, k, Direction::Up, Purpose::Activation, kRawBytesPerElement * a.size()});
      out.shard.append({round, k, Direction::Up, Purpose::Labels, kLabelBytes * labels.size()});

      const auto trace = forward(out.server, a);
      const auto loss = softmax_cross_entropy(trace.output(), labels);
      sgd_step(out.server, backward(out.server, trace, loss.grad), eta);

      const auto head_trace = forward(out.head, a);
      const auto local = softmax_cross_entropy(head_trace.output(), labels);
      const auto head_grads = backward(out.head, head_trace, local.grad);
      sgd_step(out.head, head_grads, eta);
      sgd_step(out.device, backward(out.device, device_trace, head_grads.input), eta);
      out.loss_sum += loss.loss;
      ++out.batches;
    }
  }
  out.shard.append({round, k, Direction::Up, Purpose::ModelUp, model_bytes});
  return out;
}

Federation::WorkerOutput Federation::work_classic(std::size_t t, std::uint16_t k) const {
  WorkerOutput out;
  if (config_.diagnostics) out.probe = start_probe(k);
  LayerStack<float> model = concat_weights(device_, server_);
  const double eta = config_.sgd.rate_at(t);
  const auto round = static_cast<std::uint32_t>(t);
  const std::uint64_t model_bytes = kRawBytesPerElement * parameter_count(model);
  out.shard.append({round, k, Direction::Down, Purpose::ModelDown, model_bytes});
  for (std::size_t e = 0; e < config_.local_epochs; ++e) {
    for (std::size_t b = 0; b < batches_[k].size(); ++b) {
      const auto labels = gather_labels(data_.train, batches_[k][b]);
      const auto trace = forward(model, batch_images(k, b, t, e));
      const auto loss = softmax_cross_entropy(trace.output(), labels);
      sgd_step(model, backward(model, trace, loss.grad), eta);
      out.loss_sum += loss.loss;
      ++out.batches;
    }
  }
  out.shard.append({round, k, Direction::Up, Purpose::ModelUp, model_bytes});
  out.device.assign(model.begin(), model.begin() + static_cast<long>(point_.op_index));
  out.server.assign(model.begin() + static_cast<long>(point_.op_index), model.end());
  return out;
}

RoundResult Federation::run_round(std::size_t t) { return run_mode_round(t, config_.mode); }
RoundResult Federation::run_round_actionfed(std::size_t t) { return run_mode_round(t, RunMode::ActionFed); }
RoundResult Federation::run_round_vanilla_dpfl(std::size_t t) { return run_mode_round(t, RunMode::VanillaDPFL); }
RoundResult Federation::run_round_local_loss(std::size_t t) { return run_mode_round(t, RunMode::LocalLossDPFL); }
RoundResult Federation::run_round_classic_fl(std::size_t t) { return run_mode_round(t, RunMode::ClassicFL); }

RoundResult Federation::run_mode_round(std::size_t t, RunMode mode) {
  if (mode != config_.mode) {
    throw ContractError("federation configured for " + std::string(to_string(config_.mode)) + " cannot run a " +
                        std::string(to_string(mode)) + " round");
  }
  if (t != next_round_) {
    throw ContractError("rounds run in order: expected round " + std::to_string(next_round_) + ", got " +
                        std::to_string(t));
  }
  const std::size_t K = config_.devices;
  if (config_.diagnostics) trajectory_.push_back(flatten_params(server_.layers));

  std::vector<WorkerOutput> outputs(K);
  std::vector<std::exception_ptr> errors(K);
  auto work = [&](std::size_t k) {
    try {
      const auto id = static_cast<std::uint16_t>(k);
      switch (mode) {
        case RunMode::ActionFed: outputs[k] = work_actionfed(t, id); break;
        case RunMode::VanillaDPFL: outputs[k] = work_vanilla(t, id); break;
        case RunMode::LocalLossDPFL: outputs[k] = work_local_loss(t, id); break;
        case RunMode::ClassicFL: outputs[k] = work_classic(t, id); break;
      }
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };
  const std::size_t workers = config_.threads == 0 ? K : std::min(config_.threads, K);
  if (workers <= 1) {
    for (std::size_t k = 0; k < K; ++k) work(k);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t k = w; k < K; k += workers) work(k);
      });
    }
  }
  for (std::size_t k = 0; k < K; ++k) {
    if (!errors[k]) continue;
    const std::string where = "round " + std::to_string(t) + ", device " + std::to_string(k) + ": ";
    try {
      std::rethrow_exception(errors[k]);
    } catch (const Error& e) {
      throw Error(e.category(), where + e.what());
    } catch (const std::exception& e) {
      throw std::runtime_error(where + e.what());
    }
  }

  for (const auto& o : outputs) ledger_.merge(o.shard);
  std::vector<std::size_t> counts;
  for (const auto& s : shards_) counts.push_back(s.indices.size());
  auto average = [&](auto member) {
    std::vector<LayerStack<float>> stacks;
    stacks.reserve(K);
    for (auto& o : outputs) stacks.push_back(std::move(o.*member));
    return fedavg<float>(stacks, counts);
  };
  server_.layers = average(&WorkerOutput::server);
  if (mode != RunMode::ActionFed) device_.layers = average(&WorkerOutput::device);
  if (mode == RunMode::LocalLossDPFL) head_ = average(&WorkerOutput::head);

  RoundResult result;
  result.round = t;
  result.mode = mode;
  result.transmission = mode != RunMode::ActionFed || switch_is_on(t, config_.rho);
  const double eta = config_.sgd.rate_at(t);
  if (config_.diagnostics) {
    std::vector<DeviceProbe> probes;
    for (const auto& o : outputs) probes.push_back(*o.probe);
    const double gamma = records_.empty() ? 0.0 : records_.back().gamma;
    DiagnosticsRecord rec = make_record(t, eta, probes, gamma);
    rec.update_norm = std::sqrt(squared_distance(flatten_params(server_.layers), trajectory_.back()));
    result.diagnostics_index = records_.size();
    records_.push_back(std::move(rec));
  }

  std::vector<DeviceWork> work_units;
  for (std::size_t k = 0; k < K; ++k) {
    const auto id = static_cast<std::uint16_t>(k);
    const DeviceCost c = predicted_cost(t, id);
    work_units.push_back({id, c.device_units, c.server_units});
  }
  result.latency = round_latency(ledger_, static_cast<std::uint32_t>(t), work_units, config_.speeds,
                                 profile_by_name(config_.profile));
  for (std::size_t k = 0; k < K; ++k) {
    const auto id = static_cast<std::uint16_t>(k);
    DeviceRoundResult d;
    d.device = id;
    d.server_loss = outputs[k].batches ? outputs[k].loss_sum / static_cast<double>(outputs[k].batches) : 0.0;
    d.bytes_up = ledger_.total({static_cast<std::uint32_t>(t), id, Direction::Up, {}});
    d.bytes_down = ledger_.total({static_cast<std::uint32_t>(t), id, Direction::Down, {}});
    if (config_.diagnostics) {
      d.epsilon_hat = records_.back().epsilon[k];
      d.delta_hat = records_.back().delta[k];
    }
    d.sim_latency_s = result.latency.devices[k].total_s();
    result.devices.push_back(d);
  }
  result.test_acc = evaluate(device_, server_, data_.test);
  result.train_acc = evaluate(device_, server_, data_.train);
  result.server_digest = weights_digest(server_.layers);
  result.device_digest = weights_digest(device_.layers);
  rounds_.push_back(result);
  ++next_round_;
  return result;
}

RunResult Federation::finish() {
  RunResult r;
  r.spec = spec_;
  r.point = point_;
  r.final_model = concat_weights(device_, server_);
  if (!rounds_.empty()) {
    r.final_train_acc = rounds_.back().train_acc;
    r.final_test_acc = rounds_.back().test_acc;
  } else {
    r.final_train_acc = evaluate(device_, server_, data_.train);
    r.final_test_acc = evaluate(device_, server_, data_.test);
  }

  if (config_.diagnostics && !records_.empty()) {
    Estimates est;
    est.G_hat = estimate_G(records_);
    est.F_star = min_observed_loss(records_);
    std::vector<Tensor> activations;
    std::vector<std::vector<Label>> labels;
    for (std::size_t k = 0; k < config_.devices; ++k) {
      const auto id = static_cast<std::uint16_t>(k);
      activations.push_back(predict(device_.layers, probe_images(id)));
      labels.push_back(probe_labels(id));
    }
    LayerStack<float> scratch = server_.layers;
    const GradientFn gradient = [&](std::span<const double> w) {
      assign_params(scratch, w);
      std::vector<double> mean;
      for (std::size_t k = 0; k < activations.size(); ++k) {
        const auto trace = forward(scratch, activations[k]);
        const auto loss = softmax_cross_entropy(trace.output(), labels[k]);
        const auto g = flatten_gradients(backward(scratch, trace, loss.grad));
        if (mean.empty()) mean.assign(g.size(), 0.0);
        for (std::size_t i = 0; i < g.size(); ++i) mean[i] += g[i] / static_cast<double>(activations.size());
      }
      return mean;
    };
    std::vector<std::vector<double>> anchors = trajectory_;
    anchors.push_back(flatten_params(server_.layers));
    SmoothnessOptions opts;
    opts.pairs_per_anchor = config_.smoothness_pairs;
    opts.sigma = config_.smoothness_sigma;
    opts.seed = derive_seed(config_.seed, 0x4c);
    const auto pairs = perturbation_pairs(anchors, opts);
    est.L_hat = estimate_L(gradient, pairs);
    r.estimates = est;
    if (records_.size() >= 2) r.bound = bound_report(records_, est.G_hat, est.L_hat, est.F_star);
  }

  if (!config_.spill_dir.empty() && config_.mode == RunMode::ActionFed) {
    for (const auto& b : buffers_) b.spill(config_.spill_dir);
  }

  r.config = std::move(config_);
  r.device = std::move(device_);
  r.server = std::move(server_);
  r.rounds = std::move(rounds_);
  r.ledger = std::move(ledger_);
  r.diagnostics = std::move(records_);
  return r;
}

RunResult run_training(const RunConfig& config, const std::function<void(const RoundResult&)>& on_round) {
  Federation fed(config);
  for (std::size_t t = 0; t < fed.config().rounds; ++t) {
    const RoundResult r = fed.run_round(t);
    if (on_round) on_round(r);
  }
  return fed.finish();
}

}  // namespace sfl
