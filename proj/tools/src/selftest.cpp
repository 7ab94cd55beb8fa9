#include <cmath>
#include <functional>
#include <ostream>
#include <random>
#include <set>

#include "sfl/cost_model.hpp"
#include "sfl/fedavg.hpp"
#include "sfl/loss.hpp"
#include "sfl/quantizer.hpp"
#include "sfl/runtime.hpp"
#include "sfl_cli/cli.hpp"

namespace sfl::cli {

namespace {

bool gradient_matches(LayerStack<double> layers, const Shape& input, std::uint64_t seed) {
  init_uniform(layers, seed);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Shape batch_shape = input;
  batch_shape.insert(batch_shape.begin(), 2);
  TensorD x(batch_shape);
  for (auto& v : x.data()) v = u(rng);
  const Shape out = output_shape(layers, input);
  Shape out_batch = out;
  out_batch.insert(out_batch.begin(), 2);
  TensorD probe(out_batch);
  for (auto& v : probe.data()) v = u(rng);
  auto objective = [&](const LayerStack<double>& l) {
    const TensorD y = predict(l, x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * probe[i];
    return s;
  };
  const auto trace = forward(layers, x);
  const auto g = backward(layers, trace, probe);
  const double h = 1e-5;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    for (std::size_t p = 0; p < layers[li].params.size(); ++p) {
      for (std::size_t i = 0; i < layers[li].params[p].size(); i += 3) {
        auto plus = layers, minus = layers;
        plus[li].params[p][i] += h;
        minus[li].params[p][i] -= h;
        const double fd = (objective(plus) - objective(minus)) / (2 * h);
        const double an = g.params[li][p][i];
        if (std::abs(fd - an) > 1e-4 * std::max({1.0, std::abs(fd), std::abs(an)})) return false;
      }
    }
  }
  return true;
}

bool check_gradients() {
  using L = Layer<double>;
  const std::vector<std::pair<LayerStack<double>, Shape>> cases = {
      {{L::dense(5, 3)}, {5}},
      {{L::conv3x3(2, 3)}, {2, 4, 4}},
      {{L::conv1x1(2, 3)}, {2, 4, 4}},
      {{L::conv3x3(2, 2), L::max_pool()}, {2, 4, 4}},
      {{L::dense(4, 4), L::relu()}, {4}},
      {{L::flatten(), L::dense(18, 2)}, {2, 3, 3}},
      {{L::residual(2, 3)}, {2, 4, 4}},
  };
  std::uint64_t seed = 11;
  for (const auto& [stack, shape] : cases) {
    if (!gradient_matches(stack, shape, seed++)) return false;
  }
  return true;
}

bool check_quantization() {
  std::mt19937_64 rng(3);
  std::normal_distribution<float> n(0.0f, 2.0f);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor a({4, 8});
    for (auto& v : a.data()) v = n(rng);
    const auto z = quantize(a);
    const Tensor back = dequantize<float>(z);
    for (std::size_t i = 0; i < a.size(); ++i) {
      const float tol = z.scale / 2 + std::abs(std::nextafter(a[i], INFINITY) - a[i]) * 4;
      if (std::abs(back[i] - a[i]) > tol) return false;
    }
  }
  Tensor c({3, 3}, 1.5f);
  return dequantize<float>(quantize(c)) == c;
}

bool check_fedavg() {
  LayerStack<float> m{Layer<float>::dense(3, 2)};
  init_uniform(m, 5);
  const std::vector<LayerStack<float>> same{m, m, m};
  const std::vector<std::size_t> counts{1, 7, 3};
  return fedavg<float>(same, counts) == m;
}

bool check_shards() {
  const auto shards = shard_uniform(103, 7, 9);
  std::set<std::size_t> seen;
  std::size_t lo = 1000, hi = 0;
  for (const auto& s : shards) {
    lo = std::min(lo, s.indices.size());
    hi = std::max(hi, s.indices.size());
    for (auto i : s.indices) {
      if (!seen.insert(i).second) return false;
    }
  }
  return seen.size() == 103 && hi - lo <= 1;
}

bool check_cost_table() {
  const CostReport r = cost_report(reference_setting("vgg11"));
  auto near = [](double v, double want, double rel) { return std::abs(v - want) <= rel * want; };
  return near(to_gib(r.row(Method::VanillaDPFL).aggregate.total_bytes()), 3.05, 0.02) &&
         near(to_gib(r.row(Method::LocalLossDPFL).aggregate.total_bytes()), 1.52, 0.02) &&
         near(to_gib(r.row(Method::ActionFedNoBuffer).aggregate.total_bytes()), 0.39, 0.05) &&
         near(to_gib(r.row(Method::ClassicFL).aggregate.total_bytes()), 1.28, 0.02) &&
         r.row(Method::ActionFedBuffer).aggregate.total_bytes() == 0;
}

bool check_ledger_agreement() {
  RunConfig cfg;
  cfg.devices = 2;
  cfg.rounds = 2;
  cfg.rho = 2;
  cfg.data.per_class = 20;
  cfg.pretrain_epochs = 1;
  cfg.diagnostics = false;
  Federation fed(cfg);
  for (std::size_t t = 0; t < cfg.rounds; ++t) {
    fed.run_round(t);
    for (std::uint16_t k = 0; k < cfg.devices; ++k) {
      const DeviceCost want = fed.predicted_cost(t, k);
      const auto round = static_cast<std::uint32_t>(t);
      if (fed.ledger().total({round, k, Direction::Up, {}}) != want.up_bytes()) return false;
      if (fed.ledger().total({round, k, Direction::Down, {}}) != want.down_bytes()) return false;
    }
  }
  return true;
}

}  // namespace

int run_selftest(std::ostream& out) {
  const std::vector<std::pair<const char*, std::function<bool()>>> checks = {
      {"gradients match central differences", check_gradients},
      {"quantization round trip within scale/2", check_quantization},
      {"fedavg of identical models is the identity", check_fedavg},
      {"shards are disjoint and balanced", check_shards},
      {"vgg11 cost table", check_cost_table},
      {"ledger matches the cost model", check_ledger_agreement},
  };
  int failures = 0;
  for (const auto& [name, fn] : checks) {
    bool ok = false;
    try {
      ok = fn();
    } catch (const std::exception& e) {
      out << "  (" << e.what() << ")\n";
    }
    out << (ok ? "PASS " : "FAIL ") << name << '\n';
    failures += ok ? 0 : 1;
  }
  return failures;
}

}  // namespace sfl::cli
