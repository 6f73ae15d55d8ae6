#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "specleak/common.hpp"
#include "specleak/specsim/speculative.hpp"
#include "specleak/wirechan/channel.hpp"
#include "specleak/wirechan/trace.hpp"

namespace specleak::defense {

/// Constant-rate pacing: one fixed-size packet every `interval`.
struct DefensePolicy {
  Nanos interval = millis(10);
  std::uint32_t pad_size = 0;  // 0 = one-token packet size of the frame spec
  std::size_t max_queue = 0;   // 0 = unbounded
  bool flush_at_end = true;    // end once the queue drains after the last token
  std::size_t total_slots = 0; // stream length in slots when flush_at_end is false

  void validate() const {
    if (interval.count() <= 0) throw Error("bad-config", ErrorKind::config, "pacing interval must be > 0");
    if (!flush_at_end && total_slots == 0)
      throw Error("bad-config", ErrorKind::config, "total_slots required when flush_at_end is off");
  }

  std::uint32_t packet_size(const wirechan::FrameSpec& spec) const {
    const std::uint32_t s = pad_size ? pad_size : spec.header_bytes + spec.per_token_overhead + 4;
    if (s < spec.header_bytes) throw Error("bad-config", ErrorKind::config, "pad size below header size");
    return s;
  }
};

struct LatencySummary {
  double mean_ms = 0, p50_ms = 0, p90_ms = 0, max_ms = 0;
};

struct OverheadReport {
  std::size_t real_packets = 0;
  std::size_t pad_packets = 0;
  double bandwidth_overhead = 0;  // pads / real packets
  double real_data_fraction = 0;  // real / all packets
  LatencySummary added_latency;
  std::size_t max_queue_depth = 0;
  std::size_t backpressure_slots = 0;  // slots that began with the queue above max_queue
};

inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(v.size() - 1, lo + 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline LatencySummary summarize_latency(const std::vector<double>& ms) {
  LatencySummary s;
  if (ms.empty()) return s;
  double sum = 0;
  for (double x : ms) sum += x;
  s.mean_ms = sum / static_cast<double>(ms.size());
  s.p50_ms = quantile(ms, 0.5);
  s.p90_ms = quantile(ms, 0.9);
  s.max_ms = *std::max_element(ms.begin(), ms.end());
  return s;
}

struct PacedStream {
  std::vector<wirechan::WirePacket> packets;  // every packet is pad-sized; real ones carry a token
  std::vector<double> added_latency_ms;       // per token, send slot minus emission
  OverheadReport report;
};

/// Slots sit at exact multiples of the interval from t = 0. Each slot sends the
/// oldest queued token, or a pad packet when nothing is queued.
inline PacedStream pace(std::span<const specsim::GenEvent> events, const DefensePolicy& policy,
                        const wirechan::FrameSpec& spec, const std::string& stream_id = "s0") {
  policy.validate();
  spec.validate();
  PacedStream out;
  const std::uint32_t size = policy.packet_size(spec);
  const std::int64_t I = policy.interval.count();
  if (events.empty()) return out;

  std::size_t next = 0;  // first token not yet sent
  std::size_t slot = 0;
  auto ready = [&](std::size_t s) {
    std::size_t n = next;
    while (n < events.size() && events[n].t_emit_ns <= static_cast<std::int64_t>(s) * I) ++n;
    return n - next;
  };
  while (next < events.size() || (!policy.flush_at_end && slot < policy.total_slots)) {
    const std::int64_t ts = static_cast<std::int64_t>(slot) * I;
    wirechan::WirePacket p{PacketRecord{ts, size, Direction::server_to_client, stream_id}, {}};
    const std::size_t queued = ready(slot);
    out.report.max_queue_depth = std::max(out.report.max_queue_depth, queued);
    if (policy.max_queue && queued > policy.max_queue) ++out.report.backpressure_slots;
    if (queued > 0) {
      p.tokens.push_back(events[next].token);
      out.added_latency_ms.push_back(static_cast<double>(ts - events[next].t_emit_ns) / 1e6);
      ++next;
      ++out.report.real_packets;
    } else {
      ++out.report.pad_packets;
    }
    out.packets.push_back(std::move(p));
    ++slot;
  }
  auto& r = out.report;
  r.bandwidth_overhead = r.real_packets ? static_cast<double>(r.pad_packets) / static_cast<double>(r.real_packets) : 0;
  r.real_data_fraction = static_cast<double>(r.real_packets) / static_cast<double>(r.real_packets + r.pad_packets);
  r.added_latency = summarize_latency(out.added_latency_ms);
  return out;
}

/// Observable records of a paced stream.
inline std::vector<PacketRecord> paced_records(const PacedStream& s) {
  std::vector<PacketRecord> out;
  out.reserve(s.packets.size());
  for (const auto& p : s.packets) out.push_back(p.meta);
  return out;
}

/// Aggregate accounting over many paced generations.
inline OverheadReport combine(std::span<const PacedStream> streams) {
  OverheadReport r;
  std::vector<double> lat;
  for (const auto& s : streams) {
    r.real_packets += s.report.real_packets;
    r.pad_packets += s.report.pad_packets;
    r.max_queue_depth = std::max(r.max_queue_depth, s.report.max_queue_depth);
    r.backpressure_slots += s.report.backpressure_slots;
    lat.insert(lat.end(), s.added_latency_ms.begin(), s.added_latency_ms.end());
  }
  r.bandwidth_overhead = r.real_packets ? static_cast<double>(r.pad_packets) / static_cast<double>(r.real_packets) : 0;
  const std::size_t all = r.real_packets + r.pad_packets;
  r.real_data_fraction = all ? static_cast<double>(r.real_packets) / static_cast<double>(all) : 0;
  r.added_latency = summarize_latency(lat);
  return r;
}

}  // namespace specleak::defense
