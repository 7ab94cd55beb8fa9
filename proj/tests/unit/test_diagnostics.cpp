#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <random>

#include "fd_oracle.hpp"
#include "sfl/diagnostics.hpp"
#include "sfl/loss.hpp"

using namespace sfl;

namespace {

LayerStack<double> probe_net(std::uint64_t seed) {
  LayerStack<double> s{Layer<double>::flatten(), Layer<double>::dense(6, 4), Layer<double>::relu(),
                       Layer<double>::dense(4, 3)};
  init_uniform(s, seed);
  return s;
}

double batch_loss(const LayerStack<double>& s, const TensorD& x, std::span<const Label> y) {
  return softmax_cross_entropy(predict(s, x), y).loss;
}

DiagnosticsRecord record(double eta, double grad_sq, double eps, double delta, double loss) {
  DiagnosticsRecord r;
  r.eta = eta;
  r.grad_norm_sq = grad_sq;
  r.epsilon = {eps};
  r.delta = {delta};
  r.loss = loss;
  return r;
}

}  // namespace

TEST(Flatten, AssignIsInverse) {
  auto s = probe_net(1);
  const auto flat = flatten_params(s);
  EXPECT_EQ(flat.size(), parameter_count(s));
  auto t = probe_net(2);
  assign_params(t, flat);
  EXPECT_EQ(t, s);
  EXPECT_THROW(assign_params(t, std::span(flat).first(3)), ShapeError);
}

TEST(ProbeGradient, MatchesFiniteDifferenceOfBatchMeanLoss) {
  std::mt19937_64 rng(3);
  const auto s = probe_net(3);
  const TensorD x = sfl::testing::random_tensor({5, 6}, rng);
  const std::vector<Label> y{0, 2, 1, 1, 0};
  const auto pg = probe_gradient(s, x, y);
  EXPECT_EQ(pg.samples, 5u);
  EXPECT_NEAR(pg.loss, batch_loss(s, x, y), 1e-12);

  const auto w = flatten_params(s);
  ASSERT_EQ(pg.mean_grad.size(), w.size());
  auto scratch = s;
  const double h = 1e-6;
  for (std::size_t i = 0; i < w.size(); ++i) {
    auto wp = w, wm = w;
    wp[i] += h;
    wm[i] -= h;
    assign_params(scratch, wp);
    const double fp = batch_loss(scratch, x, y);
    assign_params(scratch, wm);
    const double fm = batch_loss(scratch, x, y);
    EXPECT_LE(sfl::testing::rel_err(pg.mean_grad[i], (fp - fm) / (2 * h)), 1e-5) << "param " << i;
  }

  double max_sq = 0.0;
  for (std::size_t n = 0; n < 5; ++n) {
    const std::vector<std::size_t> one{n};
    TensorD xi({1, 6});
    for (std::size_t j = 0; j < 6; ++j) xi[j] = x[n * 6 + j];
    const auto g = probe_gradient(s, xi, std::span(y).subspan(n, 1)).mean_grad;
    double sq = 0.0;
    for (double v : g) sq += v * v;
    max_sq = std::max(max_sq, sq);
  }
  EXPECT_NEAR(pg.max_sample_grad_sq, max_sq, 1e-12 * std::max(1.0, max_sq));
}

TEST(MakeRecord, AveragesDevicesAndAccumulatesGamma) {
  DeviceProbe a, b;
  a.gradient.mean_grad = {1.0, 2.0};
  a.gradient.loss = 1.0;
  a.gradient.max_sample_grad_sq = 3.0;
  a.quantization.gradient_error = 0.1;
  a.delta = 0.0;
  b.gradient.mean_grad = {3.0, -2.0};
  b.gradient.loss = 2.0;
  b.gradient.max_sample_grad_sq = 7.0;
  b.quantization.gradient_error = 0.3;
  b.delta = 0.4;
  const std::vector<DeviceProbe> probes{a, b};
  const auto r = make_record(4, 0.05, probes, 0.2);
  EXPECT_DOUBLE_EQ(r.grad_norm_sq, 4.0);
  EXPECT_DOUBLE_EQ(r.loss, 1.5);
  EXPECT_DOUBLE_EQ(r.gamma, 0.25);
  EXPECT_DOUBLE_EQ(r.max_sample_grad_sq, 7.0);
  EXPECT_DOUBLE_EQ(r.eps_mean(), 0.2);
  EXPECT_DOUBLE_EQ(r.delta_mean(), 0.2);
  EXPECT_EQ(r.round, 4u);

  b.gradient.mean_grad = {1.0};
  EXPECT_THROW(make_record(0, 0.1, std::vector<DeviceProbe>{a, b}, 0.0), ShapeError);
}

TEST(EstimateG, IsMonotoneInRecords) {
  std::vector<DiagnosticsRecord> recs;
  EXPECT_EQ(estimate_G(recs), 0.0);
  double prev = 0.0;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int i = 0; i < 30; ++i) {
    recs.emplace_back().max_sample_grad_sq = u(rng);
    const double g = estimate_G(recs);
    EXPECT_GE(g, prev);
    prev = g;
  }
}

TEST(EstimateL, QuadraticMatchesLargestEigenvalue) {
  // f(w) = 0.5 w^T A w has gradient A w and smoothness constant lambda_max(A).
  Eigen::Matrix3d m;
  m << 2.0, 0.5, 0.1, 0.5, 1.0, 0.2, 0.1, 0.2, 0.5;
  const Eigen::Matrix3d A = m * m.transpose();
  const double lambda_max = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(A).eigenvalues().maxCoeff();

  const GradientFn grad = [&](std::span<const double> w) {
    const Eigen::Vector3d g = A * Eigen::Vector3d(w[0], w[1], w[2]);
    return std::vector<double>{g[0], g[1], g[2]};
  };
  const std::vector<std::vector<double>> anchors{{0, 0, 0}, {1, -1, 2}, {0.3, 0.3, 0.3}};
  SmoothnessOptions opts;
  opts.pairs_per_anchor = 100;
  opts.sigma = 0.5;
  opts.seed = 4;
  const auto pairs = perturbation_pairs(anchors, opts);
  EXPECT_EQ(pairs.size(), 300u);
  const double L = estimate_L(grad, pairs);
  EXPECT_LE(L, lambda_max * (1 + 1e-12));
  EXPECT_GE(L, 0.9 * lambda_max);
  EXPECT_EQ(estimate_L(grad, perturbation_pairs(anchors, opts)), L);
}

TEST(EstimateL, SkipsCoincidentPairs) {
  const GradientFn grad = [](std::span<const double> w) { return std::vector<double>(w.begin(), w.end()); };
  const std::vector<WeightPair> same{{{1.0, 2.0}, {1.0, 2.0}}};
  EXPECT_EQ(estimate_L(grad, same), 0.0);
  SmoothnessOptions zero;
  zero.sigma = 0.0;
  const std::vector<std::vector<double>> anchors{{1.0}};
  EXPECT_TRUE(perturbation_pairs(anchors, zero).empty());
}

TEST(BoundReport, HandComputedTwoRounds) {
  const std::vector<DiagnosticsRecord> recs{record(0.1, 4.0, 0.2, 0.0, 2.0), record(0.3, 1.0, 0.1, 0.3, 1.5)};
  const auto rep = bound_report(recs, 2.0, 5.0, 1.0);
  ASSERT_EQ(rep.rows.size(), 2u);
  const auto& r = rep.at(2);
  EXPECT_NEAR(r.gamma, 0.4, 1e-15);
  EXPECT_NEAR(r.lhs, (0.1 * 4.0 + 0.3 * 1.0) / 0.4, 1e-12);
  EXPECT_NEAR(r.rhs_initial, 4.0 * (2.0 - 1.0) / (3.0 * 0.4), 1e-12);
  EXPECT_NEAR(r.rhs_quantization, 2.0 * (0.1 * 0.2 + 0.3 * 0.4) / 0.4, 1e-12);
  EXPECT_NEAR(r.rhs_smoothness, 2.0 * 2.5 * (0.01 + 0.09) / 0.4, 1e-12);
  EXPECT_NEAR(r.rhs, r.rhs_initial + r.rhs_quantization + r.rhs_smoothness, 1e-12);
  EXPECT_NEAR(r.ratio, r.lhs / r.rhs, 1e-12);
  EXPECT_EQ(r.holds(), r.lhs <= r.rhs);
  EXPECT_THROW(rep.at(3), ContractError);
}

TEST(BoundReport, TermsDropOutWithTheirSources) {
  const std::vector<DiagnosticsRecord> recs{record(0.1, 1.0, 0.0, 0.0, 1.0), record(0.1, 1.0, 0.0, 0.0, 1.0)};
  const auto rep = bound_report(recs, 3.0, 0.0, 1.0);
  for (const auto& r : rep.rows) {
    EXPECT_EQ(r.rhs_quantization, 0.0);
    EXPECT_EQ(r.rhs_smoothness, 0.0);
    EXPECT_EQ(r.rhs_initial, 0.0);
  }
}

TEST(BoundReport, SmoothnessTermShrinksWithRate) {
  double last = std::numeric_limits<double>::infinity();
  for (double eta : {0.1, 0.01, 0.001}) {
    const std::vector<DiagnosticsRecord> recs(5, record(eta, 1.0, 0.0, 0.0, 1.0));
    const double s = bound_report(recs, 1.0, 10.0, 1.0).at(5).rhs_smoothness;
    EXPECT_LT(s, last);
    last = s;
  }
}

TEST(BoundReport, Preconditions) {
  const std::vector<DiagnosticsRecord> one{record(0.1, 1.0, 0.0, 0.0, 1.0)};
  EXPECT_THROW(bound_report(one, 1.0, 1.0, 0.0), ContractError);
  const std::vector<DiagnosticsRecord> frozen(3, record(0.0, 1.0, 0.0, 0.0, 1.0));
  EXPECT_THROW(bound_report(frozen, 1.0, 1.0, 0.0), ContractError);
  EXPECT_THROW(min_observed_loss(std::vector<DiagnosticsRecord>{}), ContractError);
  const std::vector<DiagnosticsRecord> losses{record(0.1, 0, 0, 0, 3.0), record(0.1, 0, 0, 0, 0.5),
                                              record(0.1, 0, 0, 0, 1.0)};
  EXPECT_EQ(min_observed_loss(losses), 0.5);
}
