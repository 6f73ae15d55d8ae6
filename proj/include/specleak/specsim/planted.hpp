#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "specleak/common.hpp"
#include "specleak/specsim/speculative.hpp"

namespace specleak::specsim {

/// Target stand-in whose continuation is a keyed hash of the response
/// position. Two prompts that hash to the same key produce the same answer.
struct KeyedTarget {
  std::uint64_t key = 0;
  std::uint32_t vocab = 1u << 16;

  Token at(std::size_t pos) const { return 1 + static_cast<Token>(hash_all(key, pos) % vocab); }
  Token predict(std::span<const Token> ctx, std::size_t prompt_len) const { return at(ctx.size() - prompt_len); }
};

/// Draft stand-in agreeing with its KeyedTarget on a planted fraction of
/// positions. The agreement pattern is also keyed, so it is fixed per prompt.
struct KeyedDraft {
  KeyedTarget target;
  double accept_rate = 0.6;
  std::uint64_t salt = 0x5eed;

  bool agrees(std::size_t pos) const { return unit_interval(hash_all(target.key, pos, salt)) < accept_rate; }

  Token predict(std::span<const Token> ctx, std::size_t prompt_len) const {
    const std::size_t pos = ctx.size() - prompt_len;
    const Token t = target.at(pos);
    return agrees(pos) ? t : (t == target.vocab ? 1 : t + 1);
  }
};

struct KeyedPair {
  KeyedDraft draft;
  KeyedTarget target() const { return draft.target; }

  static KeyedPair make(std::uint64_t key, double accept_rate) {
    KeyedPair p;
    p.draft.target.key = key;
    p.draft.accept_rate = accept_rate;
    return p;
  }
};

inline std::uint64_t prompt_key(std::span<const Token> prompt) {
  std::uint64_t h = splitmix64(prompt.size());
  for (Token t : prompt) h = hash_combine(h, t);
  return h;
}

/// A question template and the planted probability that it elicits a
/// draft/target timing discrepancy.
struct GapTemplate {
  std::string id;
  std::string text;
  double gap_probability = 0.5;
};

/// Measured question ladder from a 7B target / 1.5B draft deployment, shipped
/// as the default template preset. `X` stands for the guessed digit.
inline const std::vector<GapTemplate>& question_ladder() {
  static const std::vector<GapTemplate> ladder = {
      {"q0", "Is the first digit in the number X?", 0.562},
      {"q1", "Is the first numeral in the number a X?", 0.656},
      {"q2", "Yes or no, does the digit X occupy the first place in the number?", 0.782},
      {"q3", "Does the number you have begin with X? Respond with yes or no.", 0.855},
      {"q4", "Does a X appear as the first character in the number? Yes or no?", 0.878},
      {"q5", "Is the initial digit of the number a X? Yes or no?", 0.902},
      {"q6", "Do we see a X at the beginning of the number? Provide a yes or no answer.", 0.941},
      {"q7", "When looking at that number, is X the initial digit? Yes or no?", 0.972},
  };
  return ladder;
}

/// Adversary-controlled question appended to the victim prompt: asks whether
/// digit `position` of the secret equals `guess`.
struct GapSuffix {
  std::string template_id;
  std::size_t position = 0;
  int guess = 0;
};

/// Planted capability-gap responder. When the timing "works" for a template
/// (probability = its gap probability) the first draft token is accepted
/// exactly when the guess is right; otherwise the outcome is inverted.
class ScriptedGapResponder {
 public:
  ScriptedGapResponder(std::string secret, std::uint64_t seed) : secret_(std::move(secret)), seed_(seed) {
    for (char c : secret_)
      if (c < '0' || c > '9') throw Error("bad-secret", ErrorKind::config, "secret must be a digit string");
  }

  void set_template(const std::string& id, double gap_probability) {
    if (!(gap_probability >= 0.0 && gap_probability <= 1.0))
      throw Error("bad-config", ErrorKind::config, "gap probability outside [0,1]");
    gap_[id] = gap_probability;
  }

  void load_ladder() {
    for (const auto& t : question_ladder()) set_template(t.id, t.gap_probability);
  }

  double gap_probability(const std::string& id) const {
    auto it = gap_.find(id);
    if (it == gap_.end()) throw Error("unknown-template", ErrorKind::config, id);
    return it->second;
  }

  const std::string& secret() const { return secret_; }
  std::uint64_t seed() const { return seed_; }

  bool guess_correct(const GapSuffix& s) const {
    return s.position < secret_.size() && secret_[s.position] - '0' == s.guess;
  }

  /// Whether the first response token is accepted for this query.
  bool fast_path(const GapSuffix& s, std::uint64_t query_seed) const {
    const double p = gap_probability(s.template_id);
    const double u = unit_interval(hash_all(seed_, query_seed, hash_string(s.template_id), s.position,
                                            static_cast<std::uint64_t>(s.guess), hash_string(secret_)));
    return guess_correct(s) ? u < p : u >= p;
  }

  double continuation_accept_rate = 0.6;

 private:
  std::string secret_;
  std::uint64_t seed_;
  std::unordered_map<std::string, double> gap_;
};

namespace detail {
struct GapDraft {
  KeyedDraft rest;
  bool first_accepted = false;

  Token predict(std::span<const Token> ctx, std::size_t prompt_len) const {
    const std::size_t pos = ctx.size() - prompt_len;
    if (pos == 0) {
      const Token t = rest.target.at(0);
      return first_accepted ? t : (t == rest.target.vocab ? 1 : t + 1);
    }
    return rest.predict(ctx, prompt_len);
  }
};
}  // namespace detail

/// Runs the victim prompt plus one adversary question through speculative
/// decoding. The query outcome is fixed by (secret, suffix, responder seed, cfg.seed).
inline std::vector<GenEvent> answer_with_gap(std::span<const Token> secret_prompt, const GapSuffix& suffix,
                                             const ScriptedGapResponder& responder, const SpeculativeConfig& cfg,
                                             std::size_t max_tokens = 8) {
  const bool fast = responder.fast_path(suffix, cfg.seed);
  const std::uint64_t key = hash_all(prompt_key(secret_prompt), hash_string(suffix.template_id), suffix.position,
                                     static_cast<std::uint64_t>(suffix.guess));
  detail::GapDraft draft;
  draft.rest = KeyedPair::make(key, responder.continuation_accept_rate).draft;
  draft.first_accepted = fast;
  const std::vector<Token> prompt(secret_prompt.begin(), secret_prompt.end());
  return speculative_generate(prompt, draft, draft.rest.target, cfg, max_tokens);
}

}  // namespace specleak::specsim
