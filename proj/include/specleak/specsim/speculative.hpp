#pragma once

#include <concepts>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "specleak/common.hpp"

namespace specleak::specsim {

enum class EmitKind { accepted_draft, correction, baseline };

inline std::string_view to_string(EmitKind k) {
  switch (k) {
    case EmitKind::accepted_draft: return "accepted-draft";
    case EmitKind::correction: return "correction";
    case EmitKind::baseline: return "baseline";
  }
  return "?";
}

/// One token leaving the server, stamped in virtual time.
struct GenEvent {
  Token token = 0;
  std::int64_t t_emit_ns = 0;
  int round = 0;
  EmitKind kind = EmitKind::baseline;

  bool operator==(const GenEvent&) const = default;
};

struct SpeculativeConfig {
  int k = 5;
  Nanos draft_step_cost = millis(2);
  Nanos verify_cost = millis(14);
  Nanos baseline_cost = millis(14);
  double jitter_sigma = 0.02;
  std::uint64_t seed = 0;
  bool bonus_token = false;

  void validate() const {
    if (k < 1) throw Error("bad-config", ErrorKind::config, "k must be >= 1");
    if (draft_step_cost.count() <= 0 || verify_cost.count() <= 0 || baseline_cost.count() <= 0)
      throw Error("bad-config", ErrorKind::config, "costs must be positive");
    if (jitter_sigma < 0) throw Error("bad-config", ErrorKind::config, "jitter_sigma must be >= 0");
  }

  Nanos round_cost() const { return draft_step_cost * k + verify_cost; }
};

/// A next-token predictor that sees the whole context plus where the prompt ends.
template <class M>
concept TokenPredictor = requires(const M& m, std::span<const Token> ctx, std::size_t prompt_len) {
  { m.predict(ctx, prompt_len) } -> std::convertible_to<Token>;
};

namespace detail {
template <class M>
int model_order(const M& m) {
  if constexpr (requires { m.order(); }) {
    return m.order();
  } else {
    return 0;
  }
}
}  // namespace detail

/// Greedy-match speculative decoding in virtual time. Each round the draft
/// proposes k tokens, the target verifies them in one pass, and the accepted
/// prefix plus (on a mismatch) the target's correction leave together at the
/// round-end timestamp.
template <TokenPredictor Draft, TokenPredictor Target>
std::vector<GenEvent> speculative_generate(std::span<const Token> prompt, const Draft& draft, const Target& target,
                                           const SpeculativeConfig& cfg, std::size_t max_tokens) {
  cfg.validate();
  if (max_tokens == 0) throw Error("zero-tokens", ErrorKind::config);
  if (prompt.empty()) throw Error("empty-prompt", ErrorKind::data);
  if (detail::model_order(draft) > detail::model_order(target))
    throw Error("bad-config", ErrorKind::config, "draft order exceeds target order");

  Rng rng(cfg.seed);
  const std::size_t k = static_cast<std::size_t>(cfg.k);
  const std::size_t plen = prompt.size();

  std::vector<Token> ctx(prompt.begin(), prompt.end());
  ctx.reserve(plen + max_tokens + k + 1);
  std::vector<Token> proposal(k);
  std::vector<GenEvent> events;
  events.reserve(max_tokens);

  std::int64_t now = 0;
  int round = 0;
  while (events.size() < max_tokens) {
    for (std::size_t i = 0; i < k; ++i) {
      proposal[i] = draft.predict(ctx, plen);
      ctx.push_back(proposal[i]);
    }
    ctx.resize(ctx.size() - k);

    const std::int64_t cost = scale(cfg.round_cost(), lognormal_factor(rng, cfg.jitter_sigma)).count();
    now += cost;

    std::size_t accepted = 0;
    Token correction = 0;
    bool mismatch = false;
    for (; accepted < k; ++accepted) {
      const Token want = target.predict(ctx, plen);
      if (want != proposal[accepted]) {
        correction = want;
        mismatch = true;
        break;
      }
      ctx.push_back(want);
    }

    auto emit = [&](Token t, EmitKind kind) {
      if (events.size() < max_tokens) events.push_back({t, now, round, kind});
    };
    for (std::size_t i = 0; i < accepted; ++i) emit(proposal[i], EmitKind::accepted_draft);
    if (mismatch) {
      emit(correction, EmitKind::correction);
      ctx.push_back(correction);
    } else if (cfg.bonus_token) {
      const Token bonus = target.predict(ctx, plen);
      emit(bonus, EmitKind::correction);
      ctx.push_back(bonus);
    }
    ++round;
  }
  return events;
}

/// Plain autoregressive decoding with the target: one token per baseline cost.
template <TokenPredictor Target>
std::vector<GenEvent> baseline_generate(std::span<const Token> prompt, const Target& target,
                                        const SpeculativeConfig& cfg, std::size_t max_tokens) {
  cfg.validate();
  if (max_tokens == 0) throw Error("zero-tokens", ErrorKind::config);
  if (prompt.empty()) throw Error("empty-prompt", ErrorKind::data);

  Rng rng(cfg.seed);
  std::vector<Token> ctx(prompt.begin(), prompt.end());
  std::vector<GenEvent> events;
  events.reserve(max_tokens);
  std::int64_t now = 0;
  for (std::size_t i = 0; i < max_tokens; ++i) {
    now += scale(cfg.baseline_cost, lognormal_factor(rng, cfg.jitter_sigma)).count();
    const Token t = target.predict(ctx, prompt.size());
    ctx.push_back(t);
    events.push_back({t, now, static_cast<int>(i), EmitKind::baseline});
  }
  return events;
}

/// Virtual time from request to the last emitted token.
inline std::int64_t span_ns(std::span<const GenEvent> events) {
  return events.empty() ? 0 : events.back().t_emit_ns;
}

}  // namespace specleak::specsim
