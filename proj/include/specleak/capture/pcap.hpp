#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "specleak/common.hpp"
#include "specleak/wirechan/trace.hpp"

namespace specleak::capture {

// Classic libpcap container, no pcapng.
inline constexpr std::uint32_t pcap_magic_usec = 0xa1b2c3d4;
inline constexpr std::uint32_t pcap_magic_nsec = 0xa1b23c4d;
inline constexpr std::uint32_t linktype_ethernet = 1;
inline constexpr std::uint32_t linktype_raw = 101;

struct Endpoint {
  std::array<std::uint8_t, 4> ip{};
  std::uint16_t port = 0;

  bool operator==(const Endpoint&) const = default;
  auto operator<=>(const Endpoint&) const = default;

  std::string str() const {
    return std::to_string(ip[0]) + "." + std::to_string(ip[1]) + "." + std::to_string(ip[2]) + "." +
           std::to_string(ip[3]) + ":" + std::to_string(port);
  }
};

/// Parses "A.B.C.D:port".
inline std::optional<Endpoint> parse_endpoint(std::string_view s) {
  Endpoint e;
  const auto colon = s.rfind(':');
  if (colon == std::string_view::npos) return std::nullopt;
  std::string_view host = s.substr(0, colon);
  std::string_view port = s.substr(colon + 1);
  for (int i = 0; i < 4; ++i) {
    const auto dot = i < 3 ? host.find('.') : host.size();
    if (dot == std::string_view::npos) return std::nullopt;
    unsigned v = 0;
    auto [p, ec] = std::from_chars(host.data(), host.data() + dot, v);
    if (ec != std::errc{} || p != host.data() + dot || v > 255) return std::nullopt;
    e.ip[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v);
    host = i < 3 ? host.substr(dot + 1) : std::string_view{};
  }
  unsigned pv = 0;
  auto [p, ec] = std::from_chars(port.data(), port.data() + port.size(), pv);
  if (ec != std::errc{} || p != port.data() + port.size() || pv > 65535 || port.empty()) return std::nullopt;
  e.port = static_cast<std::uint16_t>(pv);
  return e;
}

inline Endpoint parse_endpoint_or_throw(std::string_view s) {
  auto e = parse_endpoint(s);
  if (!e) throw Error("bad-filter", ErrorKind::config, "expected A.B.C.D:port, got '" + std::string(s) + "'");
  return *e;
}

/// Canonical stream id for a TCP connection, "client>server".
inline std::string stream_name(const Endpoint& client, const Endpoint& server) {
  return client.str() + ">" + server.str();
}

inline std::optional<std::pair<Endpoint, Endpoint>> parse_stream_name(std::string_view id) {
  const auto gt = id.find('>');
  if (gt == std::string_view::npos) return std::nullopt;
  auto c = parse_endpoint(id.substr(0, gt));
  auto s = parse_endpoint(id.substr(gt + 1));
  if (!c || !s) return std::nullopt;
  return std::pair{*c, *s};
}

struct PcapExportOptions {
  bool big_endian = false;
  bool nanosecond = true;
  Endpoint default_server{{10, 0, 0, 1}, 443};
};

struct PcapImportOptions {
  std::optional<Endpoint> server;  // only packets to/from this endpoint are kept
  std::size_t max_packets = 0;     // 0 = keep everything; otherwise cap and drop shorter streams
};

namespace detail {

constexpr std::uint32_t bswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

class ByteWriter {
 public:
  explicit ByteWriter(bool big) : big_(big) {}
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2, big_); }
  void u32(std::uint32_t v) { put(v, 4, big_); }
  void be16(std::uint16_t v) { put(v, 2, true); }
  void be32(std::uint32_t v) { put(v, 4, true); }
  std::vector<std::uint8_t>& bytes() { return buf_; }

 private:
  void put(std::uint32_t v, int n, bool big) {
    for (int i = 0; i < n; ++i) {
      const int shift = big ? 8 * (n - 1 - i) : 8 * i;
      buf_.push_back(static_cast<std::uint8_t>(v >> shift));
    }
  }
  bool big_;
  std::vector<std::uint8_t> buf_;
};

inline std::uint32_t read_u32(const std::uint8_t* p, bool swap) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return swap ? bswap32(v) : v;
}

inline std::uint16_t read_be16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
}

inline std::uint16_t ipv4_checksum(const std::uint8_t* h, std::size_t len) {
  std::uint32_t sum = 0;
  for (std::size_t i = 0; i + 1 < len; i += 2) sum += static_cast<std::uint32_t>((h[i] << 8) | h[i + 1]);
  while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
  return static_cast<std::uint16_t>(~sum);
}

}  // namespace detail

inline constexpr std::size_t pcap_header_snap = 40;  // IPv4 + TCP headers, no payload

/// Serializes traces as a raw-IPv4 classic pcap. Each record stores only the
/// 40 header bytes; the original length is the packet size.
inline std::vector<std::uint8_t> export_pcap_bytes(std::span<const Trace> traces, const PcapExportOptions& opt = {}) {
  detail::ByteWriter w(opt.big_endian);
  w.u32(opt.nanosecond ? pcap_magic_nsec : pcap_magic_usec);
  w.u16(2);
  w.u16(4);
  w.u32(0);
  w.u32(0);
  w.u32(65535);
  w.u32(linktype_raw);

  struct Rec {
    std::int64_t ts;
    std::size_t order;
    const PacketRecord* r;
    Endpoint client, server;
  };
  std::vector<Rec> recs;
  for (std::size_t ti = 0; ti < traces.size(); ++ti) {
    const auto& t = traces[ti];
    Endpoint client{{10, 0, 0, 2}, static_cast<std::uint16_t>(40000 + ti % 20000)};
    Endpoint server = opt.default_server;
    if (auto named = parse_stream_name(t.stream_id)) std::tie(client, server) = *named;
    for (const auto& r : t.records) recs.push_back({r.ts_ns, recs.size(), &r, client, server});
  }
  std::stable_sort(recs.begin(), recs.end(), [](const Rec& a, const Rec& b) { return a.ts < b.ts; });

  std::uint16_t ip_id = 0;
  for (const auto& rec : recs) {
    const PacketRecord& r = *rec.r;
    if (r.ts_ns < 0) throw Error("bad-trace", ErrorKind::data, "negative timestamp cannot be exported");
    if (r.size_bytes > 65535) throw Error("bad-trace", ErrorKind::data, "packet larger than an IPv4 datagram");
    const std::uint64_t sec = static_cast<std::uint64_t>(r.ts_ns) / 1000000000ULL;
    const std::uint64_t ns = static_cast<std::uint64_t>(r.ts_ns) % 1000000000ULL;
    const std::uint32_t incl = static_cast<std::uint32_t>(std::min<std::size_t>(pcap_header_snap, r.size_bytes));
    w.u32(static_cast<std::uint32_t>(sec));
    w.u32(static_cast<std::uint32_t>(opt.nanosecond ? ns : ns / 1000));
    w.u32(incl);
    w.u32(r.size_bytes);

    const bool s2c = r.dir == Direction::server_to_client;
    const Endpoint& src = s2c ? rec.server : rec.client;
    const Endpoint& dst = s2c ? rec.client : rec.server;
    detail::ByteWriter pkt(true);
    pkt.u8(0x45);
    pkt.u8(0);
    pkt.be16(static_cast<std::uint16_t>(r.size_bytes));
    pkt.be16(ip_id++);
    pkt.be16(0x4000);
    pkt.u8(64);
    pkt.u8(6);
    pkt.be16(0);
    for (auto b : src.ip) pkt.u8(b);
    for (auto b : dst.ip) pkt.u8(b);
    const auto csum = detail::ipv4_checksum(pkt.bytes().data(), 20);
    pkt.bytes()[10] = static_cast<std::uint8_t>(csum >> 8);
    pkt.bytes()[11] = static_cast<std::uint8_t>(csum);
    pkt.be16(src.port);
    pkt.be16(dst.port);
    pkt.be32(0);
    pkt.be32(0);
    pkt.u8(5 << 4);
    pkt.u8(0x18);
    pkt.be16(65535);
    pkt.be16(0);
    pkt.be16(0);
    auto& b = pkt.bytes();
    w.bytes().insert(w.bytes().end(), b.begin(), b.begin() + incl);
  }
  return std::move(w.bytes());
}

inline void export_pcap(std::span<const Trace> traces, const std::filesystem::path& path,
                        const PcapExportOptions& opt = {}) {
  const auto bytes = export_pcap_bytes(traces, opt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io-error", ErrorKind::data, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

/// Parses a classic pcap (micro- or nanosecond, either byte order) into
/// per-connection traces keyed by 4-tuple.
inline std::vector<Trace> import_pcap_bytes(std::span<const std::uint8_t> data, const PcapImportOptions& opt = {}) {
  if (data.size() < 24) throw Error("not-pcap", ErrorKind::data, "file shorter than a pcap header");
  std::uint32_t magic;
  std::memcpy(&magic, data.data(), 4);
  bool swap = false, nsec = false;
  if (magic == pcap_magic_usec) {
  } else if (magic == pcap_magic_nsec) {
    nsec = true;
  } else if (magic == detail::bswap32(pcap_magic_usec)) {
    swap = true;
  } else if (magic == detail::bswap32(pcap_magic_nsec)) {
    swap = true;
    nsec = true;
  } else {
    throw Error("not-pcap", ErrorKind::data, "bad magic");
  }
  const std::uint32_t link = detail::read_u32(data.data() + 20, swap);
  std::size_t link_skip = 0;
  if (link == linktype_ethernet)
    link_skip = 14;
  else if (link != linktype_raw)
    throw Error("unsupported-linktype", ErrorKind::data, std::to_string(link));

  std::vector<Trace> traces;
  std::map<std::string, std::size_t> index;
  std::size_t off = 24;
  while (off < data.size()) {
    if (data.size() - off < 16) throw Error("truncated-pcap", ErrorKind::data, "partial record header");
    const std::uint32_t sec = detail::read_u32(data.data() + off, swap);
    const std::uint32_t frac = detail::read_u32(data.data() + off + 4, swap);
    const std::uint32_t incl = detail::read_u32(data.data() + off + 8, swap);
    const std::uint32_t orig = detail::read_u32(data.data() + off + 12, swap);
    off += 16;
    if (data.size() - off < incl) throw Error("truncated-pcap", ErrorKind::data, "partial record body");
    const std::uint8_t* p = data.data() + off;
    off += incl;

    if (incl < link_skip + 24) continue;
    if (link == linktype_ethernet && detail::read_be16(p + 12) != 0x0800) continue;
    const std::uint8_t* ip = p + link_skip;
    if ((ip[0] >> 4) != 4 || ip[9] != 6) continue;
    const std::size_t ihl = static_cast<std::size_t>(ip[0] & 0x0f) * 4;
    if (incl < link_skip + ihl + 4) continue;
    Endpoint src{{ip[12], ip[13], ip[14], ip[15]}, detail::read_be16(ip + ihl)};
    Endpoint dst{{ip[16], ip[17], ip[18], ip[19]}, detail::read_be16(ip + ihl + 2)};

    Direction dir;
    Endpoint client, server;
    if (opt.server) {
      if (src == *opt.server) {
        dir = Direction::server_to_client;
        server = src;
        client = dst;
      } else if (dst == *opt.server) {
        dir = Direction::client_to_server;
        server = dst;
        client = src;
      } else {
        continue;
      }
    } else {
      // Without a filter the lower port is taken to be the server.
      const bool src_is_server = src.port < dst.port || (src.port == dst.port && src < dst);
      dir = src_is_server ? Direction::server_to_client : Direction::client_to_server;
      server = src_is_server ? src : dst;
      client = src_is_server ? dst : src;
    }

    PacketRecord r;
    r.ts_ns = static_cast<std::int64_t>(sec) * 1000000000LL +
              static_cast<std::int64_t>(nsec ? frac : static_cast<std::uint64_t>(frac) * 1000ULL);
    r.size_bytes = orig - static_cast<std::uint32_t>(std::min<std::size_t>(link_skip, orig));
    r.dir = dir;
    r.stream_id = stream_name(client, server);
    auto [it, inserted] = index.emplace(r.stream_id, traces.size());
    if (inserted) traces.push_back(Trace{r.stream_id, {}});
    traces[it->second].records.push_back(std::move(r));
  }

  if (opt.max_packets > 0) {
    std::vector<Trace> kept;
    for (auto& t : traces) {
      if (t.records.size() < opt.max_packets) continue;
      t.records.resize(opt.max_packets);
      kept.push_back(std::move(t));
    }
    traces = std::move(kept);
  }
  return traces;
}

inline std::vector<Trace> import_pcap(const std::filesystem::path& path, const PcapImportOptions& opt = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io-error", ErrorKind::data, "cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return import_pcap_bytes(bytes, opt);
}

}  // namespace specleak::capture
