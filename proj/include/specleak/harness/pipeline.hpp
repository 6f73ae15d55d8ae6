#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "specleak/common.hpp"
#include "specleak/defense/sweep.hpp"
#include "specleak/harness/world.hpp"
#include "specleak/specsim/speculative.hpp"
#include "specleak/wirechan/channel.hpp"
#include "specleak/wirechan/trace.hpp"

namespace specleak::harness {

enum class Preset { openai_like, claude_like };

inline Preset parse_preset(std::string_view s) {
  if (s == "openai-like") return Preset::openai_like;
  if (s == "claude-like") return Preset::claude_like;
  throw Error("bad-config", ErrorKind::config, "unknown preset '" + std::string(s) + "'");
}

inline std::string_view to_string(Preset p) { return p == Preset::openai_like ? "openai-like" : "claude-like"; }

/// Everything between a prompt and the adversary's trace.
struct Setup {
  Preset preset = Preset::openai_like;
  specsim::SpeculativeConfig spec;
  wirechan::FrameSpec frame;
  wirechan::NetModel net;
};

/// One packet per token for openai-like; 30 ms timer flushing for claude-like.
/// Payload lengths come from the world's token texts, so `world` must outlive the setup.
inline Setup make_setup(Preset preset, const World* world = nullptr) {
  Setup s;
  s.preset = preset;
  if (world) s.frame.payload_len = [world](Token t) { return world->payload_len(t); };
  if (preset == Preset::claude_like) s.frame.flush_interval = millis(30);
  return s;
}

/// Request packet, framed response and network delay, reduced to metadata.
inline Trace wire(std::span<const specsim::GenEvent> events, const Setup& setup, std::uint64_t net_seed,
                  const std::string& stream_id = "s0") {
  defense::LabelledGeneration g{{events.begin(), events.end()}, 0, net_seed};
  return defense::wire_trace(g, setup.frame, setup.net, nullptr, stream_id);
}

inline std::uint64_t run_seed(std::uint64_t seed, std::size_t prompt, std::size_t rep) {
  return hash_all(seed, prompt, rep);
}

/// Simulates `prompt` once and returns the observed trace. Generation jitter
/// and network jitter are drawn from independent streams of `seed`.
inline Trace capture_response(const World& world, const Setup& setup, std::span<const Token> prompt,
                              std::size_t max_tokens, std::uint64_t seed, const std::string& stream_id = "s0") {
  specsim::SpeculativeConfig cfg = setup.spec;
  cfg.seed = hash_all(seed, 0x6e);
  const auto events = world.respond(prompt, cfg, max_tokens);
  return wire(events, setup, hash_all(seed, 0x7e), stream_id);
}

/// `reps` traces for each prompt, prompt-major.
inline std::vector<Trace> collect(const World& world, const Setup& setup, const std::vector<const PromptEntry*>& prompts,
                                  std::size_t reps, std::size_t max_tokens, std::uint64_t seed) {
  std::vector<Trace> out;
  out.reserve(prompts.size() * reps);
  for (std::size_t i = 0; i < prompts.size(); ++i)
    for (std::size_t r = 0; r < reps; ++r)
      out.push_back(capture_response(world, setup, prompts[i]->tokens, max_tokens, run_seed(seed, i, r),
                                     "p" + std::to_string(i) + "-r" + std::to_string(r)));
  return out;
}

/// Generations (rather than traces) for pacing experiments.
inline std::vector<std::vector<specsim::GenEvent>> generate_all(const World& world, const Setup& setup,
                                                                const std::vector<const PromptEntry*>& prompts,
                                                                std::size_t reps, std::size_t max_tokens,
                                                                std::uint64_t seed) {
  std::vector<std::vector<specsim::GenEvent>> out;
  for (std::size_t i = 0; i < prompts.size(); ++i)
    for (std::size_t r = 0; r < reps; ++r) {
      specsim::SpeculativeConfig cfg = setup.spec;
      cfg.seed = hash_all(run_seed(seed, i, r), 0x6e);
      out.push_back(world.respond(prompts[i]->tokens, cfg, max_tokens));
    }
  return out;
}

}  // namespace specleak::harness
