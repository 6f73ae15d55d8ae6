#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "specleak/attacks/gmm_classifier.hpp"
#include "specleak/defense/pace.hpp"
#include "specleak/defense/sweep.hpp"
#include "specleak/specsim/planted.hpp"

using namespace specleak;
using namespace specleak::defense;
using specsim::EmitKind;
using specsim::GenEvent;

namespace {

std::vector<GenEvent> at_ms(std::initializer_list<double> ms) {
  std::vector<GenEvent> ev;
  Token t = 1;
  for (double m : ms) ev.push_back({t++, millis(m).count(), 0, EmitKind::correction});
  return ev;
}

std::vector<GenEvent> steady(std::size_t n, double gap_ms, double start_ms = 0) {
  std::vector<GenEvent> ev;
  for (std::size_t i = 0; i < n; ++i)
    ev.push_back({static_cast<Token>(i + 1), millis(start_ms + gap_ms * static_cast<double>(i)).count(), 0, EmitKind::correction});
  return ev;
}

std::vector<GenEvent> random_generation(Rng& rng) {
  const auto pair = specsim::KeyedPair::make(rng(), 0.3 + 0.6 * unit_interval(rng()));
  specsim::SpeculativeConfig cfg;
  cfg.seed = rng();
  const std::vector<Token> prompt{1};
  return specsim::speculative_generate(prompt, pair.draft, pair.target(), cfg, 10 + rng() % 50);
}

}  // namespace

TEST(Pace, HandExample) {
  DefensePolicy p;
  const wirechan::FrameSpec spec;
  const auto s = pace(at_ms({0, 30, 60}), p, spec);
  ASSERT_EQ(s.packets.size(), 7u);
  EXPECT_EQ(s.report.real_packets, 3u);
  EXPECT_EQ(s.report.pad_packets, 4u);
  EXPECT_NEAR(s.report.bandwidth_overhead, 4.0 / 3.0, 1e-12);
  EXPECT_NEAR(s.report.real_data_fraction, 3.0 / 7.0, 1e-12);
  for (std::size_t i = 0; i < s.packets.size(); ++i) {
    EXPECT_EQ(s.packets[i].meta.ts_ns, millis(10.0 * static_cast<double>(i)).count());
    EXPECT_EQ(s.packets[i].meta.size_bytes, 40u + 150u + 4u);
    EXPECT_EQ(s.packets[i].tokens.size(), i % 3 == 0 ? 1u : 0u);
  }
  EXPECT_DOUBLE_EQ(s.report.added_latency.max_ms, 0.0);
}

TEST(Pace, BurstQueuesAndAddsLatency) {
  DefensePolicy p;
  p.max_queue = 2;
  const auto s = pace(at_ms({1, 1, 1, 1, 1}), p, {});
  ASSERT_EQ(s.packets.size(), 6u);
  EXPECT_EQ(s.added_latency_ms, (std::vector<double>{9, 19, 29, 39, 49}));
  EXPECT_EQ(s.report.max_queue_depth, 5u);
  EXPECT_EQ(s.report.backpressure_slots, 3u);
  EXPECT_DOUBLE_EQ(s.report.added_latency.p50_ms, 29);
}

TEST(Pace, ZeroTokensGiveZeroPackets) {
  const auto s = pace(std::vector<GenEvent>{}, DefensePolicy{}, {});
  EXPECT_TRUE(s.packets.empty());
}

TEST(Pace, InvariantsOnRandomGenerations) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto ev = random_generation(rng);
    DefensePolicy p;
    p.interval = millis(1.0 + static_cast<double>(rng() % 40));
    p.pad_size = 300;
    const auto s = pace(ev, p, {});
    std::size_t k = 0;
    for (std::size_t i = 0; i < s.packets.size(); ++i) {
      const auto& pk = s.packets[i];
      EXPECT_EQ(pk.meta.ts_ns, static_cast<std::int64_t>(i) * p.interval.count());
      EXPECT_EQ(pk.meta.size_bytes, 300u);
      ASSERT_LE(pk.tokens.size(), 1u);
      if (!pk.tokens.empty()) {
        EXPECT_EQ(pk.tokens[0], ev[k].token);
        EXPECT_GE(pk.meta.ts_ns, ev[k].t_emit_ns);
        ++k;
      }
    }
    EXPECT_EQ(k, ev.size());
    EXPECT_EQ(s.report.real_packets + s.report.pad_packets, s.packets.size());
    EXPECT_FALSE(s.packets.back().tokens.empty());
  }
}

TEST(Pace, SparseTokensWaitLessThanOneInterval) {
  DefensePolicy p;
  p.interval = millis(10);
  const auto s = pace(steady(50, 23, 3), p, {});
  for (double l : s.added_latency_ms) {
    EXPECT_GE(l, 0);
    EXPECT_LT(l, 10);
  }
}

TEST(Pace, FixedLengthStreamsAreIdentical) {
  Rng rng(6);
  DefensePolicy p;
  p.flush_at_end = false;
  p.total_slots = 200;
  const auto first = paced_records(pace(random_generation(rng), p, {}));
  EXPECT_EQ(first.size(), 200u);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(paced_records(pace(random_generation(rng), p, {})), first);
}

TEST(Pace, Validation) {
  DefensePolicy p;
  p.interval = Nanos{0};
  EXPECT_THROW(pace(at_ms({0}), p, {}), Error);
  p = DefensePolicy{};
  p.flush_at_end = false;
  EXPECT_THROW(pace(at_ms({0}), p, {}), Error);
  p = DefensePolicy{};
  p.pad_size = 10;
  EXPECT_THROW(pace(at_ms({0}), p, {}), Error);
}

TEST(Sweep, OverheadFallsAndLatencyRisesWithInterval) {
  Rng rng(7);
  std::vector<std::vector<GenEvent>> work;
  for (int i = 0; i < 40; ++i) work.push_back(random_generation(rng));
  const auto c = tradeoff_sweep(work, {40, 5, 10, 20, 80}, {});
  ASSERT_EQ(c.points.size(), 5u);
  EXPECT_DOUBLE_EQ(c.points.front().interval_ms, 5);
  EXPECT_TRUE(c.overhead_monotone);
  EXPECT_TRUE(c.latency_monotone);
  std::ostringstream os;
  write_csv(os, c);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "interval_ms,overhead_pct,latency_ms_mean,latency_ms_p90,real_fraction");

  const auto one = tradeoff_sweep(work, {10}, {});
  EXPECT_EQ(one.points.size(), 1u);
  EXPECT_TRUE(one.overhead_monotone && one.latency_monotone);
}

TEST(Quantile, Interpolates) {
  EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({5}, 0.9), 5);
  EXPECT_DOUBLE_EQ(quantile({}, 0.9), 0);
}

TEST(WireTrace, UndefendedMatchesFramedChannel) {
  const LabelledGeneration g{steady(20, 7), 0, 42};
  const wirechan::FrameSpec spec;
  wirechan::NetModel net;
  const auto t = wire_trace(g, spec, net, nullptr, "x");
  std::vector<wirechan::WirePacket> pk{wirechan::request_packet(spec.header_bytes + 200, 0, "x")};
  const auto framed = wirechan::frame(g.events, spec, "x");
  pk.insert(pk.end(), framed.begin(), framed.end());
  net.seed = 42;
  EXPECT_EQ(t, wirechan::observe(wirechan::transmit(pk, net)));
}

TEST(Evaluate, PacingRemovesRateDifference) {
  std::vector<LabelledGeneration> train, test;
  for (std::uint64_t i = 0; i < 60; ++i) {
    train.push_back({steady(30, 5), 0, hash_all(1, i)});
    train.push_back({steady(30, 25), 1, hash_all(2, i)});
    test.push_back({steady(30, 5), 0, hash_all(3, i)});
    test.push_back({steady(30, 25), 1, hash_all(4, i)});
  }
  DefensePolicy p;
  p.flush_at_end = false;
  p.total_slots = 120;
  attacks::GmmConfig cfg;
  cfg.features.window = 25;
  cfg.components = 1;
  const auto ev = evaluate_defense([&](const auto& bc) { return attacks::fit_gmm_classifier(bc, cfg); }, train, test, p,
                                   wirechan::FrameSpec{}, wirechan::NetModel{});
  EXPECT_DOUBLE_EQ(ev.chance, 0.5);
  EXPECT_EQ(ev.trials, 120u);
  EXPECT_GE(ev.accuracy_undefended, 0.99);
  EXPECT_NEAR(ev.accuracy_defended, 0.5, 0.15);
  EXPECT_EQ(ev.overhead.real_packets, 120u * 30u);
  EXPECT_EQ(ev.overhead.real_packets + ev.overhead.pad_packets, 120u * 120u);
}
