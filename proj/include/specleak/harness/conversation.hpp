#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "specleak/attacks/multiclass.hpp"
#include "specleak/common.hpp"
#include "specleak/harness/pipeline.hpp"
#include "specleak/harness/world.hpp"
#include "specleak/specsim/planted.hpp"

namespace specleak::harness {

inline constexpr std::string_view victim_prefix = "victim/";
inline constexpr std::string_view reply_prefix = "reply/";

/// Stands in for the human-like partner of a conversation. After each victim
/// answer it writes the next user message by picking a follow-up from a fixed
/// pool, and its own generation travels on a separate stream.
struct ScriptedReplier {
  std::uint64_t seed = 0;
  std::size_t reply_tokens = 40;

  const PromptEntry* next_prompt(const std::vector<const PromptEntry*>& pool, std::size_t conv,
                                 std::size_t turn) const {
    if (pool.empty()) throw Error("empty-pool", ErrorKind::data, "no follow-up prompts");
    return pool[hash_all(seed, conv, turn, 0xf0) % pool.size()];
  }

  std::vector<specsim::GenEvent> reply_events(std::size_t conv, std::size_t turn,
                                              const specsim::SpeculativeConfig& base) const {
    specsim::SpeculativeConfig cfg = base;
    cfg.seed = hash_all(seed, conv, turn, 0x6e);
    const auto pair = specsim::KeyedPair::make(hash_all(seed, conv, turn), 0.6);
    const std::vector<Token> prompt{1};
    return specsim::speculative_generate(prompt, pair.draft, pair.target(), cfg, reply_tokens);
  }
};

/// Every stream seen while driving one conversation, in capture order.
struct DriveResult {
  attacks::Conversation conversation;
  std::vector<Trace> capture;
};

/// Streams that belong to the victim service.
inline std::vector<Trace> victim_streams(const std::vector<Trace>& capture) {
  std::vector<Trace> out;
  for (const auto& t : capture)
    if (t.stream_id.rfind(victim_prefix, 0) == 0) out.push_back(t);
  return out;
}

/// Opens with `opener`, then alternates reply generation and victim queries
/// for `turns` victim responses. Only victim responses enter the conversation.
inline DriveResult multi_turn_drive(const World& world, const Setup& setup, const PromptEntry& opener,
                                    const std::vector<const PromptEntry*>& follow_ups, std::size_t label,
                                    std::size_t turns, std::size_t max_tokens, std::uint64_t seed,
                                    std::size_t conv_id = 0) {
  if (turns < 1) throw Error("bad-config", ErrorKind::config, "turns must be >= 1");
  ScriptedReplier replier{hash_all(seed, 0x5e)};
  Setup reply_setup = setup;
  reply_setup.frame.payload_len = [](Token) { return 4u; };
  DriveResult res;
  res.conversation.label = label;
  const PromptEntry* prompt = &opener;
  const std::string conv = std::to_string(conv_id);
  for (std::size_t t = 0; t < turns; ++t) {
    if (t > 0) {
      const auto reply = replier.reply_events(conv_id, t, setup.spec);
      res.capture.push_back(wire(reply, reply_setup, hash_all(seed, t, 0x7f), std::string(reply_prefix) + conv + "/t" + std::to_string(t)));
      prompt = replier.next_prompt(follow_ups, conv_id, t);
    }
    res.capture.push_back(capture_response(world, setup, prompt->tokens, max_tokens, hash_all(seed, t),
                                           std::string(victim_prefix) + conv + "/t" + std::to_string(t)));
  }
  res.conversation.turns = victim_streams(res.capture);
  return res;
}

}  // namespace specleak::harness
