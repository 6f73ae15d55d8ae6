#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "specleak/common.hpp"

namespace specleak::specsim {

/// Interned token strings. Id 0 is reserved for unknown words.
class Vocab {
 public:
  static constexpr Token unknown = 0;

  Vocab() { intern("<unk>"); }

  Token intern(std::string_view word) {
    auto it = index_.find(std::string(word));
    if (it != index_.end()) return it->second;
    const auto id = static_cast<Token>(words_.size());
    words_.emplace_back(word);
    index_.emplace(words_.back(), id);
    return id;
  }

  Token find(std::string_view word) const {
    auto it = index_.find(std::string(word));
    return it == index_.end() ? unknown : it->second;
  }

  bool contains(std::string_view word) const { return index_.count(std::string(word)) != 0; }

  const std::string& text(Token t) const { return words_.at(t); }

  /// UTF-8 byte length of the token text, the payload size on the wire.
  std::uint32_t byte_len(Token t) const { return static_cast<std::uint32_t>(words_.at(t).size()); }

  std::size_t size() const { return words_.size(); }

  std::vector<Token> encode(std::string_view text) {
    std::vector<Token> out;
    std::istringstream in{std::string(text)};
    for (std::string w; in >> w;) out.push_back(intern(w));
    return out;
  }

  std::vector<Token> lookup(std::string_view text) const {
    std::vector<Token> out;
    std::istringstream in{std::string(text)};
    for (std::string w; in >> w;) out.push_back(find(w));
    return out;
  }

  std::string decode(std::span<const Token> tokens) const {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i) out += ' ';
      out += text(tokens[i]);
    }
    return out;
  }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, Token> index_;
};

/// Count-based n-gram model with greedy lookup that backs off to shorter
/// contexts, down to the unigram row. Context rows are keyed by a 64-bit hash
/// of (length, tokens).
class NgramModel {
 public:
  struct Row {
    std::vector<std::pair<Token, std::uint32_t>> counts;  // sorted by token id
    std::uint64_t total = 0;
    Token best = 0;
  };

  static NgramModel train(std::span<const Token> corpus, int order) {
    if (corpus.empty()) throw Error("empty-corpus", ErrorKind::data);
    if (order < 1) throw Error("bad-order", ErrorKind::config, "order must be >= 1");
    if (corpus.size() <= static_cast<std::size_t>(order))
      throw Error("corpus-too-short", ErrorKind::data, "corpus length must exceed order");

    NgramModel m;
    m.order_ = order;
    m.levels_.resize(static_cast<std::size_t>(order));
    std::vector<std::unordered_map<std::uint64_t, std::unordered_map<Token, std::uint32_t>>> raw(
        static_cast<std::size_t>(order));
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      for (std::size_t c = 0; c < static_cast<std::size_t>(order) && c <= i; ++c) {
        ++raw[c][context_key(corpus.subspan(i - c, c))][corpus[i]];
      }
    }
    for (std::size_t c = 0; c < raw.size(); ++c) {
      auto& level = m.levels_[c];
      level.reserve(raw[c].size());
      for (auto& [key, succ] : raw[c]) {
        Row row;
        row.counts.assign(succ.begin(), succ.end());
        std::sort(row.counts.begin(), row.counts.end());
        std::uint32_t best_count = 0;
        for (auto [tok, n] : row.counts) {
          row.total += n;
          if (n > best_count) {  // strict: ties keep the lowest id
            best_count = n;
            row.best = tok;
          }
        }
        level.emplace(key, std::move(row));
      }
    }
    return m;
  }

  int order() const { return order_; }

  /// Longest-context row available for the tail of `context`.
  const Row& row(std::span<const Token> context) const {
    const std::size_t max_c = std::min(context.size(), static_cast<std::size_t>(order_ - 1));
    for (std::size_t c = max_c + 1; c-- > 0;) {
      const auto& level = levels_[c];
      auto it = level.find(context_key(context.last(c)));
      if (it != level.end()) return it->second;
    }
    // The unigram row always exists for a trained model.
    return levels_[0].begin()->second;
  }

  Token greedy(std::span<const Token> context) const { return row(context).best; }

  /// Normalized successor frequency of `y` at the longest matching context.
  double probability(Token y, std::span<const Token> context) const {
    const Row& r = row(context);
    auto it = std::lower_bound(r.counts.begin(), r.counts.end(), std::pair<Token, std::uint32_t>{y, 0});
    if (it == r.counts.end() || it->first != y) return 0.0;
    return static_cast<double>(it->second) / static_cast<double>(r.total);
  }

  // Prompt-aware interface used by the generators; n-grams ignore the split.
  Token predict(std::span<const Token> context, std::size_t /*prompt_len*/) const { return greedy(context); }
  double probability(Token y, std::span<const Token> context, std::size_t /*prompt_len*/) const {
    return probability(y, context);
  }

 private:
  static std::uint64_t context_key(std::span<const Token> ctx) {
    std::uint64_t h = splitmix64(ctx.size() + 0x51ed27);
    for (Token t : ctx) h = hash_combine(h, t);
    return h;
  }

  int order_ = 0;
  std::vector<std::unordered_map<std::uint64_t, Row>> levels_;  // index = context length
};

inline NgramModel train_ngram(std::span<const Token> corpus, int order) {
  return NgramModel::train(corpus, order);
}

}  // namespace specleak::specsim
