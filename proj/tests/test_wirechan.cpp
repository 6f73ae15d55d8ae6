#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "specleak/specsim/planted.hpp"
#include "specleak/wirechan/channel.hpp"
#include "specleak/wirechan/trace.hpp"

using namespace specleak;
using namespace specleak::wirechan;
using specsim::EmitKind;
using specsim::GenEvent;

namespace {

std::vector<GenEvent> at_ms(std::initializer_list<double> ms) {
  std::vector<GenEvent> ev;
  Token t = 1;
  for (double m : ms) ev.push_back({t++, millis(m).count(), 0, EmitKind::correction});
  return ev;
}

std::vector<WirePacket> spaced_packets(std::size_t n, std::int64_t gap_ns) {
  std::vector<WirePacket> p;
  for (std::size_t i = 0; i < n; ++i)
    p.push_back({PacketRecord{static_cast<std::int64_t>(i) * gap_ns, 200, Direction::server_to_client, "s"}, {1}});
  return p;
}

}  // namespace

template <class T>
concept CarriesTokens = requires(T t) { t.tokens; };
static_assert(CarriesTokens<WirePacket>);
static_assert(!CarriesTokens<PacketRecord>, "observed records carry no token content");
static_assert(!CarriesTokens<Trace>, "traces carry no token content");

TEST(Frame, TimerWindowHandExample) {
  FrameSpec spec;
  spec.flush_interval = millis(5);
  const auto pk = frame(at_ms({0, 0, 24}), spec);
  ASSERT_EQ(pk.size(), 2u);
  EXPECT_EQ(pk[0].meta.ts_ns, millis(5).count());
  EXPECT_EQ(pk[0].meta.size_bytes, 40u + 306u);
  EXPECT_EQ(pk[1].meta.ts_ns, millis(25).count());
  EXPECT_EQ(pk[1].meta.size_bytes, 40u + 153u);
}

TEST(Frame, NoFlushOnePacketPerToken) {
  FrameSpec spec;
  spec.payload_len = [](Token t) { return static_cast<std::uint32_t>(3 * (t - 1)); };
  const auto pk = frame(at_ms({0, 0, 0, 7}), spec);
  ASSERT_EQ(pk.size(), 4u);
  for (std::size_t i = 0; i < pk.size(); ++i) {
    EXPECT_EQ(pk[i].meta.size_bytes, 190u + 3u * i);
    EXPECT_EQ(pk[i].tokens.size(), 1u);
  }
}

TEST(Frame, BurstSharesOnePacket) {
  FrameSpec spec;
  spec.flush_interval = millis(30);
  std::vector<GenEvent> ev;
  for (Token t = 1; t <= 5; ++t) ev.push_back({t, millis(24).count(), 0, EmitKind::accepted_draft});
  const auto pk = frame(ev, spec);
  ASSERT_EQ(pk.size(), 1u);
  EXPECT_EQ(pk[0].meta.size_bytes, 40u + 5u * 153u);

  spec.rule = FlushRule::count;
  spec.flush_count = 2;
  const auto capped = frame(ev, spec);
  ASSERT_EQ(capped.size(), 3u);
  EXPECT_EQ(capped[0].tokens.size(), 2u);
  EXPECT_EQ(capped[2].tokens.size(), 1u);
}

TEST(Frame, EmptyAndInvalid) {
  FrameSpec spec;
  EXPECT_TRUE(frame({}, spec).empty());
  spec.per_token_overhead = 0;
  EXPECT_THROW(frame(at_ms({0}), spec), Error);
  spec = FrameSpec{};
  spec.flush_interval = Nanos{-1};
  EXPECT_THROW(frame(at_ms({0}), spec), Error);
}

TEST(Frame, PreservesTokensAndSizeAccounting) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const auto pair = specsim::KeyedPair::make(rng(), 0.7);
    specsim::SpeculativeConfig cfg;
    cfg.seed = rng();
    const std::vector<Token> prompt{1};
    const auto ev = specsim::speculative_generate(prompt, pair.draft, pair.target(), cfg, 60);
    FrameSpec spec;
    spec.flush_interval = millis(static_cast<double>(rng() % 40));
    spec.payload_len = [](Token t) { return static_cast<std::uint32_t>(t % 7); };
    const auto pk = frame(ev, spec);
    EXPECT_EQ(token_count(pk), ev.size());
    std::size_t i = 0;
    for (const auto& p : pk) {
      std::uint32_t size = spec.header_bytes;
      for (Token t : p.tokens) {
        EXPECT_EQ(t, ev[i].token);
        EXPECT_GE(p.meta.ts_ns, ev[i].t_emit_ns);
        size += spec.token_bytes(t);
        ++i;
      }
      EXPECT_EQ(p.meta.size_bytes, size);
    }
    for (std::size_t j = 1; j < pk.size(); ++j) EXPECT_LE(pk[j - 1].meta.ts_ns, pk[j].meta.ts_ns);
  }
}

TEST(Net, FixedLatencyShift) {
  NetModel net;
  net.jitter_sigma = 0;
  const auto in = spaced_packets(10, millis(3).count());
  const auto out = transmit(in, net);
  for (std::size_t i = 0; i < in.size(); ++i) EXPECT_EQ(out[i].meta.ts_ns, in[i].meta.ts_ns + millis(20).count());
}

TEST(Net, JitterMeanMatchesLognormal) {
  NetModel net;
  net.jitter_sigma = 0.1;
  net.seed = 12;
  const std::int64_t gap = millis(1000).count();
  const auto in = spaced_packets(10000, gap);
  const auto out = transmit(in, net);
  double sum = 0;
  for (std::size_t i = 0; i < in.size(); ++i) sum += static_cast<double>(out[i].meta.ts_ns - in[i].meta.ts_ns);
  const double mean = sum / static_cast<double>(in.size());
  const double expected = static_cast<double>(millis(20).count()) * std::exp(0.1 * 0.1 / 2);
  EXPECT_NEAR(mean, expected, 0.05 * static_cast<double>(millis(20).count()));
}

TEST(Net, NoReorderingWithinStream) {
  NetModel net;
  net.jitter_sigma = 0.8;
  net.seed = 3;
  const auto out = transmit(spaced_packets(2000, 1000), net);
  for (std::size_t i = 1; i < out.size(); ++i) EXPECT_LE(out[i - 1].meta.ts_ns, out[i].meta.ts_ns);
  EXPECT_TRUE(transmit(std::vector<WirePacket>{}, net).empty());
  net.jitter_sigma = -1;
  EXPECT_THROW(transmit(spaced_packets(1, 1), net), Error);
}

TEST(Observe, KeepsOneRecordPerPacket) {
  FrameSpec spec;
  spec.flush_interval = millis(5);
  const auto pk = frame(at_ms({0, 1, 2, 9, 30, 31}), spec, "x");
  const auto t = observe(pk);
  ASSERT_EQ(t.records.size(), pk.size());
  EXPECT_EQ(t.stream_id, "x");
  for (std::size_t i = 0; i < pk.size(); ++i) EXPECT_EQ(t.records[i], pk[i].meta);

  std::vector<WirePacket> mixed = pk;
  mixed.push_back(request_packet(300, 0, "y"));
  const auto all = observe_all(mixed);
  ASSERT_EQ(all.size(), 2u);
  EXPECT_EQ(all[1].records[0].dir, Direction::client_to_server);
}

TEST(TraceJsonl, RoundTrip) {
  std::vector<Trace> traces{{"a", {{0, 300, Direction::client_to_server, "a"}, {5, 193, Direction::server_to_client, "a"}}},
                            {"b\"q", {{7, 190, Direction::server_to_client, "b\"q"}}}};
  std::stringstream ss;
  write_jsonl(ss, traces);
  EXPECT_EQ(read_jsonl(ss), traces);
}

TEST(TraceJsonl, RejectsMalformedLines) {
  std::stringstream bad1("{\"ts_ns\":1,\"size\":0,\"dir\":\"s2c\",\"stream\":\"a\"}\n");
  EXPECT_THROW(read_jsonl(bad1), Error);
  std::stringstream bad2("{\"ts_ns\":1}\n");
  EXPECT_THROW(read_jsonl(bad2), Error);
  std::stringstream bad3("{\"ts_ns\":1,\"size\":5,\"dir\":\"sideways\",\"stream\":\"a\"}\n");
  EXPECT_THROW(read_jsonl(bad3), Error);
}
