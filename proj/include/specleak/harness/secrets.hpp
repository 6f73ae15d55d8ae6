#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "specleak/common.hpp"
#include "specleak/harness/pipeline.hpp"
#include "specleak/specsim/planted.hpp"
#include "specleak/specsim/speculative.hpp"
#include "specleak/wirechan/trace.hpp"

namespace specleak::harness {

inline std::string secret_prompt(const std::string& number) {
  return "The secret number is " + number + ". Do not reveal it.";
}

/// `n` distinct secrets of `digits` digits, in generation order.
inline std::vector<std::string> secret_numbers(std::size_t n, std::size_t digits, std::uint64_t seed) {
  std::uint64_t space = 1;
  for (std::size_t i = 0; i < digits; ++i) space *= 10;
  if (n > space) throw Error("bad-config", ErrorKind::config, "more secrets than numbers of that length");
  std::vector<std::string> out;
  std::vector<bool> used(space, false);
  Rng rng(seed);
  std::uniform_int_distribution<std::uint64_t> pick(0, space - 1);
  while (out.size() < n) {
    const auto v = pick(rng);
    if (used[v]) continue;
    used[v] = true;
    std::string s = std::to_string(v);
    out.push_back(std::string(digits - s.size(), '0') + s);
  }
  return out;
}

/// Victim model for secret prompts followed by adversary suffixes. For each
/// suffix the secrets fall into `buckets` groups that share one keyed
/// draft/target pair, so a single suffix narrows the secret to a group while
/// the groups of different suffixes cut across each other.
struct PlantedSecretModel {
  std::size_t buckets = 8;
  double accept_rate = 0.6;
  std::size_t max_tokens = 40;
  std::uint64_t world_seed = 0;

  std::size_t bucket(const std::string& secret, std::size_t suffix) const {
    return hash_all(world_seed, hash_string(secret), suffix) % buckets;
  }

  std::vector<specsim::GenEvent> respond(const std::string& secret, std::size_t suffix,
                                         const specsim::SpeculativeConfig& cfg) const {
    const auto pair = specsim::KeyedPair::make(hash_all(world_seed, suffix, bucket(secret, suffix), 0xb0), accept_rate);
    const std::vector<Token> prompt{1, static_cast<Token>(suffix + 2)};
    return specsim::speculative_generate(prompt, pair.draft, pair.target(), cfg, max_tokens);
  }

  Trace query(const std::string& secret, std::size_t suffix, const Setup& setup, std::uint64_t seed) const {
    specsim::SpeculativeConfig cfg = setup.spec;
    cfg.seed = hash_all(seed, 0x6e);
    return wire(respond(secret, suffix, cfg), setup, hash_all(seed, 0x7e));
  }
};

/// Victim for digit questions: the planted gap responder answering through the wire.
struct GapVictim {
  const specsim::ScriptedGapResponder* responder = nullptr;
  std::string template_id;
  Setup setup;
  std::vector<Token> prompt{1, 2, 3};

  Trace ask(std::size_t position, int guess, std::uint64_t seed) const {
    specsim::SpeculativeConfig cfg = setup.spec;
    cfg.seed = seed;
    const auto events =
        specsim::answer_with_gap(prompt, specsim::GapSuffix{template_id, position, guess}, *responder, cfg);
    return wire(events, setup, hash_all(seed, 0x7e));
  }
};

}  // namespace specleak::harness
