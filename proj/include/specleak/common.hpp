#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace specleak {

using Token = std::uint32_t;
using Nanos = std::chrono::nanoseconds;

inline constexpr Nanos millis(double ms) {
  return Nanos{static_cast<std::int64_t>(ms * 1e6 + (ms >= 0 ? 0.5 : -0.5))};
}

inline constexpr double to_millis(Nanos d) { return static_cast<double>(d.count()) / 1e6; }
inline constexpr double to_seconds(std::int64_t ns) { return static_cast<double>(ns) / 1e9; }

/// Failure classes map onto CLI exit codes: config errors exit 2, data errors exit 3.
enum class ErrorKind { config, data };

/// Error carrying a stable machine-readable code such as "trace-too-short".
class Error : public std::runtime_error {
 public:
  Error(std::string code, ErrorKind kind = ErrorKind::data, const std::string& detail = {})
      : std::runtime_error(detail.empty() ? code : code + ": " + detail),
        code_(std::move(code)),
        kind_(kind) {}

  const std::string& code() const noexcept { return code_; }
  ErrorKind kind() const noexcept { return kind_; }

 private:
  std::string code_;
  ErrorKind kind_;
};

using Rng = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) {
  return splitmix64(seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2)));
}

template <class... Ts>
constexpr std::uint64_t hash_all(std::uint64_t first, Ts... rest) {
  std::uint64_t h = splitmix64(first);
  ((h = hash_combine(h, static_cast<std::uint64_t>(rest))), ...);
  return h;
}

inline std::uint64_t hash_string(std::string_view s, std::uint64_t seed = 0) {
  // FNV-1a folded through splitmix so short strings still spread.
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(h);
}

/// Maps a 64-bit hash to [0, 1).
inline constexpr double unit_interval(std::uint64_t h) {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

/// Multiplicative lognormal factor exp(sigma * Z); exactly 1 when sigma == 0.
inline double lognormal_factor(Rng& rng, double sigma) {
  if (sigma == 0.0) return 1.0;
  std::normal_distribution<double> z(0.0, 1.0);
  return std::exp(sigma * z(rng));
}

inline Nanos scale(Nanos d, double factor) {
  return Nanos{std::llround(static_cast<double>(d.count()) * factor)};
}

}  // namespace specleak
