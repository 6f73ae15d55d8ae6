#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "specleak/common.hpp"
#include "specleak/specsim/ngram.hpp"
#include "specleak/specsim/speculative.hpp"

namespace specleak::harness {

inline constexpr std::size_t language_count = 10;

struct WorldConfig {
  std::uint64_t seed = 0;
  std::size_t counting_reps = 30;
  int counting_to = 400;
  std::size_t random_prompts = 80;
  std::size_t random_len = 360;
  std::size_t topic_prompts = 40;     // per topic, for each of initial and follow-up
  std::size_t language_prompts = 40;  // per language
  std::size_t response_len = 110;
  double topic_a_density[2] = {0.25, 0.45};
  double topic_b_density[2] = {0.10, 0.30};
};

/// One memorized request in the world corpus.
struct PromptEntry {
  std::string workload;  // easy-sequence, random-numbers, topic-A, ...
  std::string text;
  std::vector<Token> tokens;
  std::vector<Token> response;  // memorized continuation
  bool follow_up = false;
  double hub_density = 0;
};

namespace detail {

inline std::string utf8(char32_t c) {
  std::string s;
  if (c < 0x80) {
    s += static_cast<char>(c);
  } else if (c < 0x800) {
    s += static_cast<char>(0xC0 | (c >> 6));
    s += static_cast<char>(0x80 | (c & 0x3F));
  } else if (c < 0x10000) {
    s += static_cast<char>(0xE0 | (c >> 12));
    s += static_cast<char>(0x80 | ((c >> 6) & 0x3F));
    s += static_cast<char>(0x80 | (c & 0x3F));
  } else {
    s += static_cast<char>(0xF0 | (c >> 18));
    s += static_cast<char>(0x80 | ((c >> 12) & 0x3F));
    s += static_cast<char>(0x80 | ((c >> 6) & 0x3F));
    s += static_cast<char>(0x80 | (c & 0x3F));
  }
  return s;
}

/// Code-point block, word length range and timing profile of one synthetic language.
struct Script {
  char32_t first;
  char32_t count;
  int min_len;
  int max_len;
  double hub_density;
};

inline const std::vector<Script>& language_scripts() {
  static const std::vector<Script> s = {
      {U'a', 26, 1, 3, 0.05},      {U'a', 26, 4, 7, 0.10},      {U'a', 26, 8, 12, 0.15},
      {0x00E0, 32, 1, 3, 0.20},    {0x03B1, 24, 3, 6, 0.25},    {0x0430, 32, 6, 9, 0.30},
      {0x4E00, 4000, 1, 2, 0.35},  {0x3041, 80, 2, 4, 0.40},    {0x1F300, 700, 1, 2, 0.45},
      {0x1D400, 52, 2, 3, 0.50},
  };
  return s;
}

}  // namespace detail

/// Shared corpus and draft/target n-gram pair behind every text workload.
/// The draft is order 2 and the target order 4, both trained on the same corpus.
/// Responses are memorized continuations; "hub" words recur across responses so
/// the draft's one-word context cannot predict what follows them.
class World {
 public:
  explicit World(const WorldConfig& cfg = {}) : cfg_(cfg), rng_(cfg.seed) {
    build();
    draft_ = specsim::NgramModel::train(corpus_, 2);
    target_ = specsim::NgramModel::train(corpus_, 4);
  }

  const WorldConfig& config() const { return cfg_; }
  const specsim::Vocab& vocab() const { return vocab_; }
  const std::vector<Token>& corpus() const { return corpus_; }
  const specsim::NgramModel& draft() const { return draft_; }
  const specsim::NgramModel& target() const { return target_; }
  const std::vector<PromptEntry>& prompts() const { return prompts_; }

  std::vector<const PromptEntry*> prompts_of(std::string_view workload, bool include_follow_ups = true) const {
    std::vector<const PromptEntry*> out;
    for (const auto& p : prompts_)
      if (p.workload == workload && (include_follow_ups || !p.follow_up)) out.push_back(&p);
    return out;
  }

  const PromptEntry* find_prompt(std::string_view text) const {
    auto it = by_text_.find(std::string(text));
    return it == by_text_.end() ? nullptr : &prompts_[it->second];
  }

  /// Tokens of a prompt; unknown words map to the reserved unknown id.
  std::vector<Token> tokenize(std::string_view text) const { return vocab_.lookup(text); }

  std::vector<specsim::GenEvent> respond(std::span<const Token> prompt, const specsim::SpeculativeConfig& cfg,
                                         std::size_t max_tokens) const {
    return specsim::speculative_generate(prompt, draft_, target_, cfg, max_tokens);
  }
  std::vector<specsim::GenEvent> respond_baseline(std::span<const Token> prompt, const specsim::SpeculativeConfig& cfg,
                                                  std::size_t max_tokens) const {
    return specsim::baseline_generate(prompt, target_, cfg, max_tokens);
  }

  std::uint32_t payload_len(Token t) const { return vocab_.byte_len(t); }

 private:
  std::string fresh_word(const detail::Script& s) {
    for (;;) {
      const int len = std::uniform_int_distribution<int>(s.min_len, s.max_len)(rng_);
      std::string w;
      for (int i = 0; i < len; ++i)
        w += detail::utf8(s.first + std::uniform_int_distribution<char32_t>(0, s.count - 1)(rng_));
      if (!vocab_.contains(w)) return w;
    }
  }

  void add_sequence(const std::vector<std::string>& words) {
    for (const auto& w : words) corpus_.push_back(vocab_.intern(w));
    corpus_.push_back(vocab_.intern("."));
  }

  void add_prompt(std::string workload, std::vector<std::string> prompt_words, std::vector<std::string> response,
                  bool follow_up, double density) {
    PromptEntry e;
    e.workload = std::move(workload);
    for (std::size_t i = 0; i < prompt_words.size(); ++i) e.text += (i ? " " : "") + prompt_words[i];
    std::vector<std::string> seq = prompt_words;
    seq.insert(seq.end(), response.begin(), response.end());
    add_sequence(seq);
    e.tokens = vocab_.lookup(e.text);
    for (const auto& w : response) e.response.push_back(vocab_.find(w));
    e.follow_up = follow_up;
    e.hub_density = density;
    by_text_.emplace(e.text, prompts_.size());
    prompts_.push_back(std::move(e));
  }

  /// Fresh words with hubs sprinkled in at `density`; never two hubs in a row.
  std::vector<std::string> hub_response(const detail::Script& script, const std::vector<std::string>& hubs,
                                        double density) {
    std::vector<std::string> out;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    bool prev_hub = true;
    for (std::size_t i = 0; i < cfg_.response_len; ++i) {
      if (!prev_hub && u(rng_) < density) {
        out.push_back(hubs[std::uniform_int_distribution<std::size_t>(0, hubs.size() - 1)(rng_)]);
        prev_hub = true;
      } else {
        out.push_back(fresh_word(script));
        prev_hub = false;
      }
    }
    return out;
  }

  void build() {
    // counting: "count : 1 2 ... N ."
    std::vector<std::string> counting{"count", ":"};
    for (int i = 1; i <= cfg_.counting_to; ++i) counting.push_back(std::to_string(i));
    for (std::size_t r = 0; r < cfg_.counting_reps; ++r) add_sequence(counting);
    for (int s = 1; s <= 45; ++s) {
      PromptEntry e;
      e.workload = "easy-sequence";
      e.text = "count : " + std::to_string(s) + " " + std::to_string(s + 1) + " " + std::to_string(s + 2);
      e.tokens = vocab_.lookup(e.text);
      for (int v = s + 3; v <= cfg_.counting_to; ++v) e.response.push_back(vocab_.find(std::to_string(v)));
      by_text_.emplace(e.text, prompts_.size());
      prompts_.push_back(std::move(e));
    }

    std::uniform_int_distribution<int> num(1, 100);
    for (std::size_t i = 0; i < cfg_.random_prompts; ++i) {
      std::vector<std::string> words{"random", ":"};
      for (std::size_t j = 0; j < cfg_.random_len; ++j) words.push_back(std::to_string(num(rng_)));
      std::vector<std::string> prompt(words.begin(), words.begin() + 5);
      if (by_text_.count(prompt[0] + " " + prompt[1] + " " + prompt[2] + " " + prompt[3] + " " + prompt[4])) continue;
      add_prompt("random-numbers", prompt, std::vector<std::string>(words.begin() + 5, words.end()), false, 1.0);
    }

    const detail::Script ascii{U'a', 26, 3, 8, 0};
    const std::vector<std::string> topic_hubs = {"the", "of", "and", "to", "in", "is", "for", "that",
                                                 "with", "on", "as", "it", "be", "are", "this", "by"};
    const std::pair<const char*, const double*> topics[] = {{"topic-A", cfg_.topic_a_density},
                                                            {"topic-B", cfg_.topic_b_density}};
    for (const auto& [name, range] : topics) {
      const std::string marker = name == std::string("topic-A") ? "medical" : "coding";
      for (int follow = 0; follow < 2; ++follow)
        for (std::size_t i = 0; i < cfg_.topic_prompts; ++i) {
          const double d = std::uniform_real_distribution<double>(range[0], range[1])(rng_);
          std::vector<std::string> prompt{follow ? marker + "-more" : marker, ":"};
          for (int w = 0; w < 4; ++w) prompt.push_back(fresh_word(ascii));
          add_prompt(name, prompt, hub_response(ascii, topic_hubs, d), follow == 1, d);
        }
    }

    const auto& scripts = detail::language_scripts();
    for (std::size_t l = 0; l < scripts.size(); ++l) {
      std::vector<std::string> hubs;
      for (int h = 0; h < 8; ++h) hubs.push_back(fresh_word(scripts[l]));
      for (std::size_t i = 0; i < cfg_.language_prompts; ++i) {
        std::vector<std::string> prompt{"lang" + std::to_string(l), ":"};
        for (int w = 0; w < 3; ++w) prompt.push_back(fresh_word(scripts[l]));
        add_prompt("language-" + std::to_string(l), prompt, hub_response(scripts[l], hubs, scripts[l].hub_density),
                   false, scripts[l].hub_density);
      }
    }
  }

  WorldConfig cfg_;
  Rng rng_;
  specsim::Vocab vocab_;
  std::vector<Token> corpus_;
  specsim::NgramModel draft_, target_;
  std::vector<PromptEntry> prompts_;
  std::map<std::string, std::size_t> by_text_;
};

/// Worlds are deterministic in their config; one instance per seed is shared.
inline std::shared_ptr<const World> shared_world(std::uint64_t seed = 0) {
  static std::map<std::uint64_t, std::shared_ptr<const World>> cache;
  auto& w = cache[seed];
  if (!w) {
    WorldConfig cfg;
    cfg.seed = seed;
    w = std::make_shared<const World>(cfg);
  }
  return w;
}

}  // namespace specleak::harness
