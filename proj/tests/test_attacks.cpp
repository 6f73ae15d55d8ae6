#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "specleak/attacks/boost.hpp"
#include "specleak/attacks/convnet.hpp"
#include "specleak/attacks/gmm_classifier.hpp"
#include "specleak/attacks/model_io.hpp"
#include "specleak/attacks/multiclass.hpp"
#include "specleak/attacks/pr.hpp"
#include "specleak/harness/studies.hpp"

using namespace specleak;
using namespace specleak::attacks;

namespace {

/// Server packets at cumulative delays drawn from N(mean_ms[j % period], sd_ms).
Trace synthetic(const std::vector<double>& mean_ms, double sd_ms, std::size_t packets, Rng& rng,
                std::uint32_t size = 193) {
  std::normal_distribution<double> nd(0.0, sd_ms);
  Trace t{"syn", {}};
  std::int64_t ts = 0;
  t.records.push_back({0, 300, Direction::client_to_server, "syn"});
  for (std::size_t j = 0; j < packets; ++j) {
    ts += std::max<std::int64_t>(0, millis(mean_ms[j % mean_ms.size()] + nd(rng)).count());
    t.records.push_back({ts, size, Direction::server_to_client, "syn"});
  }
  return t;
}

std::vector<Trace> many(std::size_t n, const std::vector<double>& mean_ms, double sd_ms, Rng& rng) {
  std::vector<Trace> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(synthetic(mean_ms, sd_ms, 40, rng));
  return out;
}

GmmConfig small_gmm() {
  GmmConfig c;
  c.features.window = 20;
  c.components = 2;
  c.var_floor = 1e-8;
  return c;
}

}  // namespace

TEST(Features, HandExample) {
  const std::vector<std::int64_t> d{10'000'000, 20'000'000};
  EXPECT_EQ(featurize(d, 4), (FeatureVector{0.01, 0.02, 0.0, 0.0}));
  EXPECT_EQ(featurize(d, 1), (FeatureVector{0.01}));
  EXPECT_EQ(featurize(d, 3, -1.0), (FeatureVector{0.01, 0.02, -1.0}));
}

TEST(Features, SizeChannelDoublesLength) {
  Rng rng(1);
  const auto t = synthetic({5}, 0, 10, rng, 346);
  FeatureSpec spec;
  spec.window = 12;
  spec.include_sizes = true;
  const auto x = featurize(t, spec);
  ASSERT_EQ(x.size(), 24u);
  EXPECT_NEAR(x[0], 0.005, 1e-12);
  EXPECT_DOUBLE_EQ(x[12], 0.346);
  EXPECT_DOUBLE_EQ(x[20], 0.346);
  EXPECT_DOUBLE_EQ(x[21], 0.0);
  spec.source = TimingSource::token_delays;
  EXPECT_THROW(featurize(t, spec), Error);
}

TEST(GmmClassifier, IdenticalClassesAreAtChance) {
  Rng rng(3);
  const auto cfg = small_gmm();
  const auto clf = fit_ab(many(100, {10}, 2, rng), many(100, {10}, 2, rng), cfg);
  const double acc = accuracy(clf, {many(300, {10}, 2, rng), many(300, {10}, 2, rng)});
  EXPECT_GT(acc, 0.4);
  EXPECT_LT(acc, 0.6);
}

TEST(GmmClassifier, SeparatesConstantRates) {
  Rng rng(4);
  const auto clf = fit_ab(many(40, {5}, 0.2, rng), many(40, {25}, 0.2, rng), small_gmm());
  const auto a = many(50, {5}, 0.2, rng), b = many(50, {25}, 0.2, rng);
  EXPECT_DOUBLE_EQ(accuracy(clf, {a, b}), 1.0);
  EXPECT_LT(score_ab(a[0], clf), 0);
  EXPECT_GT(score_ab(b[0], clf), 0);
  const auto cm = confusion_matrix(clf, {a, b});
  EXPECT_EQ(cm[0][0], 50u);
  EXPECT_EQ(cm[1][1], 50u);
}

TEST(GmmClassifier, Validation) {
  Rng rng(5);
  EXPECT_THROW(fit_ab(many(5, {5}, 1, rng), many(40, {5}, 1, rng), small_gmm()), Error);
  EXPECT_THROW(fit_gmm_classifier({}, small_gmm()), Error);
  auto cfg = small_gmm();
  cfg.min_per_class = 1;
  const auto clf = fit_gmm_classifier({many(2, {5}, 1, rng), many(30, {5}, 1, rng)}, cfg);
  ASSERT_EQ(clf.warnings.size(), 1u);
}

TEST(Pr, SeparatedScoresGivePerfectCurve) {
  const std::vector<double> s{0.9, 0.8, 0.7, 0.2, 0.1};
  const std::vector<bool> y{true, true, true, false, false};
  const auto c = pr_sweep(s, y);
  EXPECT_DOUBLE_EQ(c.auc, 1.0);
  EXPECT_DOUBLE_EQ(c.max_recall_at_precision(1.0), 1.0);
}

TEST(Pr, MatchesBruteForceThresholds) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s;
    std::vector<bool> y;
    for (int i = 0; i < 60; ++i) {
      y.push_back(rng() % 2 == 0);
      s.push_back(static_cast<double>(rng() % 15));
    }
    y[0] = true;
    const auto c = pr_sweep(s, y);
    const double pos = static_cast<double>(std::count(y.begin(), y.end(), true));
    double prev = 0, ap = 0;
    for (std::size_t k = 0; k < c.points.size(); ++k) {
      const auto& p = c.points[k];
      double tp = 0, fp = 0;
      for (std::size_t i = 0; i < s.size(); ++i)
        if (s[i] >= p.threshold) {
          (y[i] ? tp : fp) += 1;
        }
      EXPECT_DOUBLE_EQ(p.precision, tp / (tp + fp));
      EXPECT_DOUBLE_EQ(p.recall, tp / pos);
      if (k) {
        EXPECT_LT(p.threshold, c.points[k - 1].threshold);
      }
      ap += (p.recall - prev) * p.precision;
      prev = p.recall;
    }
    EXPECT_NEAR(c.auc, ap, 1e-12);
    EXPECT_DOUBLE_EQ(c.points.back().recall, 1.0);
  }
}

TEST(Pr, RandomScoresNearBaseRate) {
  Rng rng(7);
  std::uniform_real_distribution<double> u;
  std::vector<double> s;
  std::vector<bool> y;
  for (int i = 0; i < 20000; ++i) {
    s.push_back(u(rng));
    y.push_back(i % 2 == 0);
  }
  EXPECT_NEAR(pr_sweep(s, y).auc, 0.5, 0.02);
  EXPECT_THROW(pr_sweep(s, std::vector<bool>(s.size(), false)), Error);
  EXPECT_THROW(pr_sweep(std::vector<double>{1.0}, y), Error);
}

TEST(ConvNet, ProbabilitiesAndDeterminism) {
  ConvNet net({2, 16, 3, 3, 4, 3, 3});
  net.init(5);
  Rng rng(8);
  std::normal_distribution<double> nd;
  Sequence x(32);
  for (auto& v : x) v = nd(rng);
  const auto p = net.probabilities(x);
  EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
  const auto lp = net.log_probabilities(x);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(std::exp(lp[i]), p[i], 1e-12);

  ConvNet again({2, 16, 3, 3, 4, 3, 3});
  again.init(5);
  EXPECT_EQ(net.params(), again.params());
  EXPECT_THROW(ConvNet({1, 4, 3, 3, 4, 3, 2}), Error);
}

TEST(ConvNet, LearnsRateDifferenceReproducibly) {
  Rng rng(9);
  const std::vector<std::vector<Trace>> train{many(60, {5}, 1, rng), many(60, {9}, 1, rng)};
  const std::vector<std::vector<Trace>> test{many(50, {5}, 1, rng), many(50, {9}, 1, rng)};
  ConvNetConfig cfg;
  cfg.length = 30;
  cfg.training.epochs = 15;
  cfg.training.seed = 2;
  const auto a = fit_convnet(train, cfg), b = fit_convnet(train, cfg);
  EXPECT_EQ(a.net.params(), b.net.params());
  EXPECT_GE(accuracy(a, test), 0.95);
  EXPECT_LT(a.log.epoch_loss.back(), a.log.epoch_loss.front());
}

TEST(ConvNet, FullBatchLossNeverIncreases) {
  Rng rng(10);
  ConvNetConfig cfg;
  cfg.length = 30;
  cfg.training.epochs = 25;
  cfg.training.full_batch = true;
  cfg.training.lr = 0.5;
  const auto clf = fit_convnet({many(20, {5, 7}, 1, rng), many(20, {7, 5}, 1, rng)}, cfg);
  const auto& l = clf.log.epoch_loss;
  for (std::size_t i = 1; i < l.size(); ++i) EXPECT_LE(l[i], l[i - 1] + 1e-12);
}

TEST(ConvNet, SingleClassAlwaysPredicted) {
  Rng rng(11);
  ConvNetConfig cfg;
  cfg.length = 20;
  cfg.training.epochs = 2;
  const auto clf = fit_convnet({many(10, {5}, 1, rng)}, cfg);
  for (const auto& t : many(10, {30}, 5, rng)) {
    EXPECT_EQ(clf.predict(t), 0u);
    EXPECT_NEAR(clf.probabilities(t)[0], 1.0, 1e-12);
  }
}

namespace {

struct ScriptedClassifier {
  std::size_t num_classes() const { return 2; }
  std::vector<double> log_scores(const Trace& t) const {
    const double v = static_cast<double>(t.records.front().ts_ns);
    return {0.0, v};
  }
};

Trace marker(std::int64_t v) { return Trace{"m", {{v, 1, Direction::server_to_client, "m"}}}; }

}  // namespace

TEST(MultiTurn, SumsScoresAcrossTurns) {
  const std::vector<Conversation> convs{{1, {marker(-1), marker(3), marker(-1)}}, {0, {marker(1), marker(-5)}}};
  const auto acc = multi_turn_accuracy(ScriptedClassifier{}, convs, 3);
  EXPECT_EQ(acc, (std::vector<double>{0.0, 1.0, 1.0}));
  EXPECT_EQ(argmax({1.0, 3.0, 3.0}), 1u);
  EXPECT_THROW(parse_arch("forest"), Error);
}

TEST(Boost, TiedGaussianHandExample) {
  const auto m = fit_tied_gaussian({{{0.0}, {2.0}}, {{10.0}, {12.0}}}, 1e-9);
  EXPECT_EQ(m.means, (std::vector<std::vector<double>>{{1.0}, {11.0}}));
  EXPECT_DOUBLE_EQ(m.var[0], 1.0);
  const std::vector<double> x{3.0};
  EXPECT_EQ(m.log_scores(x), (std::vector<double>{-2.0, -32.0}));
}

TEST(Boost, SingleCandidateIsTrivial) {
  Rng rng(12);
  const auto e = boost_fit(1, 3, [&](std::size_t, std::size_t, std::uint64_t) { return synthetic({5}, 1, 60, rng); });
  EXPECT_EQ(boost_infer(e, [&](std::size_t) { return synthetic({50}, 1, 60, rng); }), 0u);
  EXPECT_THROW(boost_fit(0, 1, {}), Error);
}

TEST(Boost, EnsembleNoWorseThanBestSuffix) {
  harness::BoostStudyConfig cfg;
  cfg.secrets = 40;
  cfg.suffixes = 8;
  cfg.victims = 100;
  const auto r = harness::boost_study(cfg);
  EXPECT_GE(r.recovery, r.best_single_suffix - 0.02);
  EXPECT_EQ(r.queries, 800u);
}

TEST(ModelIo, RoundTripsPreserveScores) {
  Rng rng(13);
  const auto a = many(30, {5}, 1, rng), b = many(30, {8}, 1, rng);
  const auto gmm = fit_ab(a, b, small_gmm());
  const auto gmm2 = gmm_from_json(nlohmann::json::parse(to_json(gmm).dump()));
  ConvNetConfig cc;
  cc.length = 20;
  cc.training.epochs = 2;
  const auto cn = fit_convnet({a, b}, cc);
  const auto cn2 = classifier_from_json(nlohmann::json::parse(to_json(SignatureClassifier(cn)).dump()));
  ASSERT_EQ(cn2.arch(), Arch::convnet);
  for (const auto& t : b) {
    EXPECT_EQ(gmm.log_scores(t), gmm2.log_scores(t));
    EXPECT_EQ(cn.log_scores(t), cn2.log_scores(t));
  }

  const auto e = boost_fit(2, 2, [&](std::size_t i, std::size_t, std::uint64_t) { return synthetic({5.0 + 3.0 * static_cast<double>(i)}, 1, 60, rng); });
  const auto e2 = boost_from_json(nlohmann::json::parse(to_json(e).dump()));
  EXPECT_EQ(e.suffix_scores(1, a[0]), e2.suffix_scores(1, a[0]));

  auto bad = to_json(gmm);
  bad["version"] = 99;
  EXPECT_THROW(gmm_from_json(bad), Error);
  EXPECT_THROW(boost_from_json(to_json(gmm)), Error);
  EXPECT_THROW(read_model_file("/nonexistent/model.json"), Error);
}
