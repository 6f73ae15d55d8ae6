#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "specleak/common.hpp"

namespace specleak {

enum class Direction : std::uint8_t { client_to_server, server_to_client };

inline std::string_view to_string(Direction d) { return d == Direction::client_to_server ? "c2s" : "s2c"; }

inline Direction parse_direction(std::string_view s) {
  if (s == "c2s") return Direction::client_to_server;
  if (s == "s2c") return Direction::server_to_client;
  throw Error("bad-trace", ErrorKind::data, "unknown direction '" + std::string(s) + "'");
}

/// Everything a network observer learns about one encrypted packet.
struct PacketRecord {
  std::int64_t ts_ns = 0;
  std::uint32_t size_bytes = 0;
  Direction dir = Direction::server_to_client;
  std::string stream_id;

  bool operator==(const PacketRecord&) const = default;
};

/// Metadata-only view of one stream. There is deliberately no payload field:
/// attack code can only see timestamps, sizes and directions.
struct Trace {
  std::string stream_id;
  std::vector<PacketRecord> records;

  bool operator==(const Trace&) const = default;

  std::vector<PacketRecord> server_records() const {
    std::vector<PacketRecord> out;
    out.reserve(records.size());
    for (const auto& r : records)
      if (r.dir == Direction::server_to_client) out.push_back(r);
    return out;
  }
};

// JSONL: one {"ts_ns","size","dir","stream"} object per line.

inline void write_jsonl(std::ostream& os, const std::vector<Trace>& traces) {
  for (const auto& t : traces) {
    for (const auto& r : t.records) {
      os << "{\"ts_ns\":" << r.ts_ns << ",\"size\":" << r.size_bytes << ",\"dir\":\"" << to_string(r.dir)
         << "\",\"stream\":" << nlohmann::json(r.stream_id).dump() << "}\n";
    }
  }
}

/// Groups records into traces by stream id, in order of first appearance.
inline std::vector<Trace> read_jsonl(std::istream& is) {
  std::vector<Trace> traces;
  std::unordered_map<std::string, std::size_t> index;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    PacketRecord r;
    try {
      const auto j = nlohmann::json::parse(line);
      r.ts_ns = j.at("ts_ns").get<std::int64_t>();
      const auto size = j.at("size").get<std::int64_t>();
      if (size <= 0) throw Error("bad-trace", ErrorKind::data, "size must be positive");
      r.size_bytes = static_cast<std::uint32_t>(size);
      r.dir = parse_direction(j.at("dir").get<std::string>());
      r.stream_id = j.at("stream").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error("bad-trace", ErrorKind::data, "line " + std::to_string(lineno) + ": " + e.what());
    }
    auto [it, inserted] = index.emplace(r.stream_id, traces.size());
    if (inserted) traces.push_back(Trace{r.stream_id, {}});
    traces[it->second].records.push_back(std::move(r));
  }
  return traces;
}

}  // namespace specleak
