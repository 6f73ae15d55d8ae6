#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "specleak/common.hpp"
#include "specleak/specsim/speculative.hpp"
#include "specleak/wirechan/trace.hpp"

namespace specleak::wirechan {

/// How tokens ready at the server are grouped into packets.
enum class FlushRule {
  timer,  // tokens in the same flush window share a packet sent at window close
  count,  // simultaneous tokens share a packet, at most flush_count per packet
};

struct FrameSpec {
  std::uint32_t per_token_overhead = 150;
  std::function<std::uint32_t(Token)> payload_len = [](Token) { return 3u; };
  Nanos flush_interval{0};
  std::uint32_t header_bytes = 40;
  FlushRule rule = FlushRule::timer;
  std::uint32_t flush_count = 0;

  void validate() const {
    if (per_token_overhead == 0) throw Error("bad-config", ErrorKind::config, "per-token overhead must be > 0");
    if (flush_interval.count() < 0) throw Error("bad-config", ErrorKind::config, "flush interval must be >= 0");
    if (!payload_len) throw Error("bad-config", ErrorKind::config, "payload_len unset");
  }

  std::uint32_t token_bytes(Token t) const { return per_token_overhead + payload_len(t); }
  std::uint32_t single_token_packet(Token t) const { return header_bytes + token_bytes(t); }
};

/// A packet as it exists inside the server: metadata plus the (encrypted)
/// tokens it carries. Only `observe` turns these into adversary-visible traces.
struct WirePacket {
  PacketRecord meta;
  std::vector<Token> tokens;
};

inline std::vector<WirePacket> frame(std::span<const specsim::GenEvent> events, const FrameSpec& spec,
                                     const std::string& stream_id = "s0") {
  spec.validate();
  std::vector<WirePacket> out;
  if (events.empty()) return out;

  auto open_packet = [&](std::int64_t ts) {
    WirePacket p;
    p.meta = PacketRecord{ts, spec.header_bytes, Direction::server_to_client, stream_id};
    out.push_back(std::move(p));
  };
  auto add = [&](Token t) {
    out.back().tokens.push_back(t);
    out.back().meta.size_bytes += spec.token_bytes(t);
  };

  const std::int64_t f = spec.flush_interval.count();
  if (spec.rule == FlushRule::count) {
    const std::size_t cap = spec.flush_count == 0 ? SIZE_MAX : spec.flush_count;
    for (std::size_t i = 0; i < events.size(); ++i) {
      const bool join = i > 0 && events[i].t_emit_ns == events[i - 1].t_emit_ns && out.back().tokens.size() < cap;
      if (!join) open_packet(events[i].t_emit_ns);
      add(events[i].token);
    }
    return out;
  }
  if (f == 0) {
    for (const auto& e : events) {
      open_packet(e.t_emit_ns);
      add(e.token);
    }
    return out;
  }
  std::int64_t current_window = -1;
  for (const auto& e : events) {
    const std::int64_t w = e.t_emit_ns >= 0 ? e.t_emit_ns / f : (e.t_emit_ns - f + 1) / f;
    if (out.empty() || w != current_window) {
      current_window = w;
      open_packet((w + 1) * f);
    }
    add(e.token);
  }
  return out;
}

/// The client's request, sent at `ts`.
inline WirePacket request_packet(std::uint32_t size_bytes, std::int64_t ts_ns, const std::string& stream_id) {
  return WirePacket{PacketRecord{ts_ns, size_bytes, Direction::client_to_server, stream_id}, {}};
}

struct NetModel {
  Nanos one_way_base = millis(20);
  double jitter_sigma = 0.05;
  std::uint64_t seed = 0;

  void validate() const {
    if (one_way_base.count() < 0) throw Error("bad-config", ErrorKind::config, "one-way base must be >= 0");
    if (jitter_sigma < 0) throw Error("bad-config", ErrorKind::config, "net jitter must be >= 0");
  }
};

inline PacketRecord& record_of(WirePacket& p) { return p.meta; }
inline PacketRecord& record_of(PacketRecord& p) { return p; }
inline const PacketRecord& record_of(const WirePacket& p) { return p.meta; }
inline const PacketRecord& record_of(const PacketRecord& p) { return p; }

/// Adds one-way latency base * exp(sigma Z) to every packet. A packet never
/// overtakes an earlier one from the same stream and direction; it queues
/// behind it instead.
template <class Packet>
std::vector<Packet> transmit(std::vector<Packet> packets, const NetModel& net) {
  net.validate();
  Rng rng(net.seed);
  std::map<std::pair<std::string, Direction>, std::int64_t> last;
  for (auto& p : packets) {
    PacketRecord& r = record_of(p);
    const std::int64_t lat = scale(net.one_way_base, lognormal_factor(rng, net.jitter_sigma)).count();
    std::int64_t ts = r.ts_ns + lat;
    auto [it, fresh] = last.try_emplace({r.stream_id, r.dir}, ts);
    if (!fresh) {
      ts = std::max(ts, it->second);
      it->second = ts;
    }
    r.ts_ns = ts;
  }
  std::stable_sort(packets.begin(), packets.end(),
                   [](const Packet& a, const Packet& b) { return record_of(a).ts_ns < record_of(b).ts_ns; });
  return packets;
}

/// Drops packet contents, keeping only what an on-path observer sees.
inline std::vector<Trace> observe_all(std::span<const WirePacket> packets) {
  std::vector<Trace> traces;
  std::map<std::string, std::size_t> index;
  for (const auto& p : packets) {
    auto [it, inserted] = index.emplace(p.meta.stream_id, traces.size());
    if (inserted) traces.push_back(Trace{p.meta.stream_id, {}});
    traces[it->second].records.push_back(p.meta);
  }
  return traces;
}

inline Trace observe(std::span<const WirePacket> packets) {
  Trace t;
  if (!packets.empty()) t.stream_id = packets.front().meta.stream_id;
  t.records.reserve(packets.size());
  for (const auto& p : packets) t.records.push_back(p.meta);
  return t;
}

inline std::size_t token_count(std::span<const WirePacket> packets) {
  std::size_t n = 0;
  for (const auto& p : packets) n += p.tokens.size();
  return n;
}

}  // namespace specleak::wirechan
