#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "specleak/common.hpp"
#include "specleak/harness/config.hpp"
#include "specleak/harness/secrets.hpp"
#include "specleak/harness/world.hpp"

namespace specleak::harness {

/// Prompts of one kind plus the text each is expected to produce.
struct Workload {
  std::string kind;
  std::uint64_t seed = 0;
  std::vector<std::string> prompts;
  std::vector<std::string> responses;  // empty for kinds without a memorized answer

  /// UTF-8 byte length of every response word, concatenated over prompts.
  std::vector<std::uint32_t> payload_lengths() const {
    std::vector<std::uint32_t> out;
    for (const auto& r : responses) {
      std::size_t start = 0;
      while (start < r.size()) {
        auto end = r.find(' ', start);
        if (end == std::string::npos) end = r.size();
        if (end > start) out.push_back(static_cast<std::uint32_t>(end - start));
        start = end + 1;
      }
    }
    return out;
  }
};

inline bool known_workload_kind(std::string_view kind) {
  if (kind == "easy-sequence" || kind == "random-numbers" || kind == "topic-A" || kind == "topic-B" ||
      kind == "secret-number")
    return true;
  if (kind.rfind("language-", 0) == 0) {
    const auto n = kind.substr(9);
    return n.size() == 1 && n[0] >= '0' && static_cast<std::size_t>(n[0] - '0') < language_count;
  }
  return false;
}

/// Kinds: easy-sequence, random-numbers, topic-A, topic-B, language-0..9, secret-number.
inline Workload gen_workload(std::string_view kind, std::uint64_t seed, std::size_t secrets = 100,
                             std::size_t digits = 3) {
  if (!known_workload_kind(kind)) throw Error("bad-config", ErrorKind::config, "unknown workload '" + std::string(kind) + "'");
  Workload w{std::string(kind), seed, {}, {}};
  if (kind == "secret-number") {
    for (const auto& n : secret_numbers(secrets, digits, seed)) w.prompts.push_back(secret_prompt(n));
    return w;
  }
  const auto world = shared_world(seed);
  for (const auto* p : world->prompts_of(kind)) {
    w.prompts.push_back(p->text);
    w.responses.push_back(world->vocab().decode(p->response));
  }
  return w;
}

/// Scenarios used by the command line and the acceptance run.
///   ab:        easy-sequence vs random-numbers, 40 prompts each
///   topic:     opening prompts of topic-A vs topic-B, 8 turns
///   languages: first 20 prompts of each language workload
inline Scenario builtin_scenario(std::string_view name, std::uint64_t world_seed = 0) {
  const auto world = shared_world(world_seed);
  Scenario s;
  s.id = std::string(name);
  auto take = [&](std::string_view workload, std::size_t n, bool follow_ups) {
    auto ps = world->prompts_of(workload, follow_ups);
    for (std::size_t i = 0; i < std::min(n, ps.size()); ++i) s.prompts.push_back(ps[i]->text);
  };
  if (name == "ab") {
    take("easy-sequence", 40, true);
    take("random-numbers", 40, true);
    s.predicate = {"prefix", {{"prefix", "count"}}};
  } else if (name == "topic") {
    take("topic-A", 40, false);
    take("topic-B", 40, false);
    s.predicate = {"workload", json::object()};
    s.max_tokens = 100;
    s.turns = 8;
  } else if (name == "languages") {
    for (std::size_t l = 0; l < language_count; ++l) take("language-" + std::to_string(l), 20, true);
    s.predicate = {"workload", json::object()};
    s.max_tokens = 100;
  } else {
    throw Error("scenario-not-found", ErrorKind::config, "no built-in scenario '" + std::string(name) + "'");
  }
  return s;
}

}  // namespace specleak::harness
