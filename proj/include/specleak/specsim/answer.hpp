#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "specleak/common.hpp"
#include "specleak/specsim/planted.hpp"
#include "specleak/specsim/speculative.hpp"

namespace specleak::specsim {

/// Yes/no answerer whose log-odds of "yes" is a sum of per-token weights over
/// the whole context. `mix` blends in the weights of a second salt, so a draft
/// can share part of its target's judgement.
struct AnswerModel {
  std::uint64_t salt = 1;
  double gain = 4.0;
  double bias = 0.0;
  std::uint64_t shared_salt = 0;
  double mix = 0.0;
  Token yes = 1;
  Token no = 2;

  static double raw_weight(std::uint64_t s, Token t) { return 2.0 * unit_interval(hash_all(s, t)) - 1.0; }

  double weight(Token t) const { return (1.0 - mix) * raw_weight(salt, t) + mix * raw_weight(shared_salt, t); }

  double logit(std::span<const Token> ctx) const {
    double acc = 0;
    for (Token t : ctx) acc += weight(t);
    return bias + gain * acc;
  }

  double p_yes(std::span<const Token> ctx) const { return 1.0 / (1.0 + std::exp(-logit(ctx))); }

  double probability(Token y, std::span<const Token> ctx) const {
    const double p = p_yes(ctx);
    return y == yes ? p : y == no ? 1.0 - p : 0.0;
  }

  Token predict(std::span<const Token> ctx, std::size_t prompt_len) const {
    return p_yes(ctx.first(prompt_len)) >= 0.5 ? yes : no;
  }

  /// A weaker model: its weights blend its own salt with this model's.
  AnswerModel draft(std::uint64_t draft_salt, double share, double draft_bias) const {
    AnswerModel d = *this;
    d.salt = draft_salt;
    d.shared_salt = salt;
    d.mix = share;
    d.bias = draft_bias;
    return d;
  }
};

/// Samples both models' first answer token for one query; the first draft
/// token is accepted iff the answers agree.
template <class Draft, class Target>
bool sampled_agreement(std::span<const Token> x, const Draft& draft, const Target& target, Token y,
                       std::uint64_t query_seed) {
  const double pt = target.probability(y, x);
  const double pd = draft.probability(y, x);
  const bool t_yes = unit_interval(hash_all(query_seed, 0x7a)) < pt;
  const bool d_yes = unit_interval(hash_all(query_seed, 0xd4)) < pd;
  return t_yes == d_yes;
}

/// Answers prompt `x` with speculative decoding whose first round is decided
/// by `sampled_agreement`; the remainder follows a keyed continuation.
template <class Draft, class Target>
std::vector<GenEvent> answer_sampled(std::span<const Token> x, const Draft& draft, const Target& target, Token y,
                                     const SpeculativeConfig& cfg, std::size_t max_tokens = 8,
                                     double continuation_accept_rate = 0.6) {
  detail::GapDraft d;
  d.rest = KeyedPair::make(prompt_key(x), continuation_accept_rate).draft;
  d.first_accepted = sampled_agreement(x, draft, target, y, hash_all(cfg.seed, prompt_key(x)));
  return speculative_generate(x, d, d.rest.target, cfg, max_tokens);
}

}  // namespace specleak::specsim
