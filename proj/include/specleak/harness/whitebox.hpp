#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "specleak/attacks/difficulty.hpp"
#include "specleak/attacks/second_token.hpp"
#include "specleak/common.hpp"
#include "specleak/harness/pipeline.hpp"
#include "specleak/specsim/answer.hpp"

namespace specleak::harness {

/// A yes/no target and a draft that nearly always answers "no", over a
/// vocabulary of ids [first_token, first_token + vocab).
struct WhiteBoxWorld {
  specsim::AnswerModel target;
  specsim::AnswerModel draft;
  Token first_token = 3;
  std::size_t vocab = 1000;
  Setup setup = make_setup(Preset::openai_like);

  explicit WhiteBoxWorld(std::uint64_t seed = 0, double gain = 4.0, double draft_gain = 0.25,
                         double draft_bias = -8.0) {
    target.salt = hash_all(seed, 0x7a);
    target.gain = gain;
    draft = target.draft(hash_all(seed, 0xd4), 0.3, draft_bias);
    draft.gain = draft_gain;
  }

  std::vector<Token> tokens() const {
    std::vector<Token> v(vocab);
    std::iota(v.begin(), v.end(), first_token);
    return v;
  }

  std::vector<Token> random_prompt(std::size_t len, std::uint64_t seed) const {
    Rng rng(seed);
    std::uniform_int_distribution<Token> pick(first_token, first_token + static_cast<Token>(vocab) - 1);
    std::vector<Token> p(len);
    for (auto& t : p) t = pick(rng);
    return p;
  }

  attacks::DifficultyScorer<specsim::AnswerModel, specsim::AnswerModel> scorer() const {
    return {&draft, &target, target.yes, 4.8, 24.0};
  }

  Trace query(std::span<const Token> x, std::uint64_t seed) const {
    specsim::SpeculativeConfig cfg = setup.spec;
    cfg.seed = seed;
    const auto events = specsim::answer_sampled(x, draft, target, target.yes, cfg);
    return wire(events, setup, hash_all(seed, 0x7e));
  }

  static std::vector<Token> concat(std::span<const Token> a, std::span<const Token> b) {
    std::vector<Token> x(a.begin(), a.end());
    x.insert(x.end(), b.begin(), b.end());
    return x;
  }

  /// Fraction of `trials` queries of `x` whose first token the oracle calls rejected.
  double slow_rate(std::span<const Token> x, const attacks::SecondTokenOracle& oracle, std::size_t trials,
                   std::uint64_t seed) const {
    std::size_t slow = 0;
    for (std::size_t i = 0; i < trials; ++i)
      slow += oracle(query(x, hash_all(seed, i))) == attacks::FirstToken::rejected;
    return static_cast<double>(slow) / static_cast<double>(trials);
  }

  /// Accuracy of naming which candidate prompt sits before `suffix` from one
  /// query's slow/fast outcome. Each outcome maps to the candidate the
  /// difficulty proxy rates most (or least) likely to be slow.
  double distinguishing_rate(const std::vector<std::vector<Token>>& prompts, std::span<const Token> suffix,
                             const attacks::SecondTokenOracle& oracle, std::size_t trials_per_prompt,
                             std::uint64_t seed) const {
    const auto sc = scorer();
    std::vector<double> d;
    for (const auto& m : prompts) {
      const auto x = concat(m, suffix);
      d.push_back(attacks::difficulty(std::span<const Token>(x), sc));
    }
    const auto slow_guess = static_cast<std::size_t>(std::max_element(d.begin(), d.end()) - d.begin());
    const auto fast_guess = static_cast<std::size_t>(std::min_element(d.begin(), d.end()) - d.begin());
    std::size_t hit = 0;
    for (std::size_t c = 0; c < prompts.size(); ++c) {
      const auto x = concat(prompts[c], suffix);
      for (std::size_t i = 0; i < trials_per_prompt; ++i) {
        const bool slow = oracle(query(x, hash_all(seed, c, i))) == attacks::FirstToken::rejected;
        hit += (slow ? slow_guess : fast_guess) == c;
      }
    }
    return static_cast<double>(hit) / static_cast<double>(prompts.size() * trials_per_prompt);
  }
};

}  // namespace specleak::harness
