#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "specleak/stats/gmm.hpp"

using namespace specleak;
using namespace specleak::stats;

namespace {

std::vector<double> two_blobs(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> a(0.0, 1.0), b(8.0, 2.0);
  std::vector<double> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(i % 3 ? a(rng) : b(rng));
  return out;
}

}  // namespace

TEST(LogSumExp, MatchesDirectSumAndHandlesInfinity) {
  const std::vector<double> v{-1.0, 0.5, 2.0};
  EXPECT_NEAR(log_sum_exp(v), std::log(std::exp(-1.0) + std::exp(0.5) + std::exp(2.0)), 1e-12);
  const std::vector<double> big{1000.0, 1000.0};
  EXPECT_NEAR(log_sum_exp(big), 1000.0 + std::log(2.0), 1e-12);
  EXPECT_TRUE(std::isinf(log_sum_exp(std::vector<double>{})));
}

TEST(DiagGmm, SingleComponentDensity) {
  DiagGmm g{2, {1.0}, {1.0, -2.0}, {4.0, 0.25}};
  const std::vector<double> x{2.0, -1.0};
  const double expected = -0.5 * (std::log(2 * std::numbers::pi * 4.0) + 0.25 + std::log(2 * std::numbers::pi * 0.25) + 4.0);
  EXPECT_NEAR(g.log_density(x), expected, 1e-12);
}

TEST(Em, MonotoneAndNormalisedOnRandomInstances) {
  Rng rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t dim = 1 + rng() % 3, k = 1 + rng() % 4, n = 20 + rng() % 60;
    std::normal_distribution<double> nd(0.0, 3.0);
    std::vector<double> data(n * dim);
    for (auto& v : data) v = nd(rng);
    EmOptions opt;
    opt.max_iter = 100;
    const auto fit = fit_em(data, dim, seeded_init(data, dim, k, rng()), opt);
    for (std::size_t i = 1; i < fit.loglik.size(); ++i) EXPECT_GE(fit.loglik[i], fit.loglik[i - 1] - 1e-9 * (1 + std::abs(fit.loglik[i - 1])));
    double wsum = 0;
    for (double w : fit.model.weights) wsum += w;
    EXPECT_NEAR(wsum, 1.0, 1e-9);
    for (double v : fit.model.vars) EXPECT_GE(v, opt.var_floor);
  }
}

TEST(Em, RecoversSeparatedBlobs) {
  const auto data = two_blobs(3000, 5);
  const auto fit = fit_em(data, 1, quantile_init(data, 2));
  EXPECT_TRUE(fit.converged);
  const auto& m = fit.model;
  const std::size_t lo = m.means[0] < m.means[1] ? 0 : 1, hi = 1 - lo;
  EXPECT_NEAR(m.means[lo], 0.0, 0.15);
  EXPECT_NEAR(m.means[hi], 8.0, 0.25);
  EXPECT_NEAR(m.weights[hi], 1.0 / 3.0, 0.03);
  EXPECT_NEAR(std::sqrt(m.vars[hi]), 2.0, 0.2);
}

TEST(Em, SingleComponentIsMaximumLikelihood) {
  const std::vector<double> data{1, 2, 3, 4, 10};
  const auto fit = fit_em(data, 1, quantile_init(data, 1));
  EXPECT_NEAR(fit.model.means[0], 4.0, 1e-12);
  EXPECT_NEAR(fit.model.vars[0], column_variance(data, 1)[0], 1e-12);
  EXPECT_NEAR(fit.model.vars[0], 10.0, 1e-12);
}

TEST(Em, VarianceFloorOnConstantData) {
  const std::vector<double> data(50, 3.0);
  EmOptions opt;
  opt.var_floor = 0.5;
  const auto fit = fit_em(data, 1, quantile_init(data, 1), opt);
  EXPECT_DOUBLE_EQ(fit.model.vars[0], 0.5);
}

TEST(Em, MeanBoxClampsMeans) {
  const auto data = two_blobs(600, 8);
  EmOptions opt;
  opt.mean_lo = {-0.5, 5.0};
  opt.mean_hi = {0.5, 6.0};
  DiagGmm init{1, {0.5, 0.5}, {0.0, 5.5}, {1.0, 1.0}};
  const auto fit = fit_em(data, 1, init, opt);
  EXPECT_LE(fit.model.means[1], 6.0);
  EXPECT_GE(fit.model.means[1], 5.0);
  EXPECT_DOUBLE_EQ(fit.model.means[1], 6.0);
}

TEST(Em, MinMassFreezesStarvedComponent) {
  const auto data = two_blobs(300, 3);
  EmOptions opt;
  opt.min_mass = 5.0;
  opt.max_iter = 20;
  DiagGmm init{1, {0.5, 0.5}, {0.0, 500.0}, {1.0, 1.0}};
  const auto fit = fit_em(data, 1, init, opt);
  EXPECT_DOUBLE_EQ(fit.model.means[1], 500.0);
  EXPECT_DOUBLE_EQ(fit.model.vars[1], 1.0);
  EXPECT_LT(fit.model.weights[1], 1e-6);
}

TEST(Em, RejectsBadShapes) {
  EXPECT_THROW(fit_em(std::vector<double>{}, 1, DiagGmm{1, {1.0}, {0.0}, {1.0}}), Error);
  EXPECT_THROW(fit_em(std::vector<double>{1, 2, 3}, 2, DiagGmm{2, {1.0}, {0.0, 0.0}, {1.0, 1.0}}), Error);
  EXPECT_THROW(fit_em(std::vector<double>{1, 2}, 0, DiagGmm{}), Error);
}

TEST(Init, SeededInitIsDeterministic) {
  const auto data = two_blobs(100, 1);
  const auto a = seeded_init(data, 1, 3, 42), b = seeded_init(data, 1, 3, 42);
  EXPECT_EQ(a.means, b.means);
  EXPECT_EQ(a.components(), 3u);
  const auto q = quantile_init(data, 4);
  for (std::size_t i = 1; i < 4; ++i) EXPECT_LE(q.means[i - 1], q.means[i]);
}
