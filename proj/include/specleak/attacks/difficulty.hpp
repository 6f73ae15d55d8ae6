#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "specleak/common.hpp"

namespace specleak::attacks {

/// A model exposing normalized next-token probabilities.
template <class M>
concept ProbabilityModel = requires(const M& m, Token y, std::span<const Token> ctx) {
  { m.probability(y, ctx) } -> std::convertible_to<double>;
};

/// White-box timing proxy: T(x) ~ fast + (slow - fast) * difficulty(x).
template <ProbabilityModel Draft, ProbabilityModel Target>
struct DifficultyScorer {
  const Draft* draft = nullptr;
  const Target* target = nullptr;
  Token y = 0;
  double fast_ms = 4.8;
  double slow_ms = 24.0;

  double expected_time_ms(double difficulty) const { return fast_ms + (slow_ms - fast_ms) * difficulty; }
};

/// Pr_target[y | x] - Pr_draft[y | x], in [-1, 1].
template <ProbabilityModel Draft, ProbabilityModel Target>
double difficulty(std::span<const Token> x, const DifficultyScorer<Draft, Target>& s) {
  const double d = s.target->probability(s.y, x) - s.draft->probability(s.y, x);
  return std::clamp(d, -1.0, 1.0);
}

using SuffixObjective = std::function<double(std::span<const Token> suffix)>;

/// Mean pairwise |E T(m_a + t) - E T(m_b + t)| over the candidate prompts,
/// with E T given by the difficulty proxy.
template <ProbabilityModel Draft, ProbabilityModel Target>
SuffixObjective timing_gap_objective(const DifficultyScorer<Draft, Target>& scorer,
                                     std::vector<std::vector<Token>> prompts) {
  return [scorer, prompts = std::move(prompts)](std::span<const Token> suffix) {
    std::vector<double> t;
    std::vector<Token> x;
    for (const auto& m : prompts) {
      x.assign(m.begin(), m.end());
      x.insert(x.end(), suffix.begin(), suffix.end());
      t.push_back(scorer.expected_time_ms(difficulty(std::span<const Token>(x), scorer)));
    }
    double acc = 0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < t.size(); ++a)
      for (std::size_t b = a + 1; b < t.size(); ++b, ++pairs) acc += std::abs(t[a] - t[b]);
    return pairs ? acc / static_cast<double>(pairs) : 0.0;
  };
}

struct CoordinateSearchConfig {
  std::size_t budget = 100;     // coordinate updates
  std::size_t candidates = 0;   // tokens tried per update; 0 = whole vocabulary
  std::uint64_t seed = 0;
};

struct CoordinateSearchResult {
  std::vector<Token> suffix;
  std::vector<double> history;  // objective after each update; entry 0 is the initial suffix
  std::size_t evaluations = 0;
};

/// Hill climbing over suffix positions, cycling left to right. Each update
/// keeps the current token unless a candidate strictly improves the objective.
inline CoordinateSearchResult greedy_coordinate_search(const SuffixObjective& objective, std::vector<Token> init,
                                                       std::span<const Token> vocab,
                                                       const CoordinateSearchConfig& cfg = {}) {
  CoordinateSearchResult res;
  res.suffix = std::move(init);
  double best = objective(res.suffix);
  res.evaluations = 1;
  res.history.push_back(best);
  if (res.suffix.empty() || vocab.empty()) return res;
  Rng rng(cfg.seed);
  std::vector<Token> pool(vocab.begin(), vocab.end());
  for (std::size_t it = 0; it < cfg.budget; ++it) {
    const std::size_t pos = it % res.suffix.size();
    if (cfg.candidates > 0 && cfg.candidates < pool.size()) {
      for (std::size_t i = 0; i < cfg.candidates; ++i)
        std::swap(pool[i], pool[std::uniform_int_distribution<std::size_t>(i, pool.size() - 1)(rng)]);
    }
    const std::size_t n = cfg.candidates > 0 ? std::min(cfg.candidates, pool.size()) : pool.size();
    Token keep = res.suffix[pos];
    for (std::size_t i = 0; i < n; ++i) {
      res.suffix[pos] = pool[i];
      const double v = objective(res.suffix);
      ++res.evaluations;
      if (v > best) {
        best = v;
        keep = pool[i];
      }
    }
    res.suffix[pos] = keep;
    res.history.push_back(best);
  }
  return res;
}

}  // namespace specleak::attacks
