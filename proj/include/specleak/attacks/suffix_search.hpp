#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "specleak/common.hpp"

namespace specleak::attacks {

/// Produces `n` rewordings of a question template. `X` marks the guessed digit.
class Rephraser {
 public:
  virtual ~Rephraser() = default;
  virtual std::vector<std::string> rephrase(const std::string& tmpl, std::size_t n) = 0;
};

/// Measured distinguishing rate of a template, in [0, 1].
using TemplateScorer = std::function<double(const std::string&)>;

/// Question templates assembled from one phrase per slot. Each phrase carries
/// a planted clarity weight; a template's gap probability interpolates from
/// `floor` (all-default phrases) to `ceiling` (all-best phrases) by mean weight.
class PlantedLandscape {
 public:
  using Slots = std::vector<std::vector<std::string>>;

  static Slots default_slots() {
    return {
        {"Is", "Tell me whether", "Answer yes or no: is", "Quick check, is", "Confirm if", "I wonder if"},
        {"the first digit", "the leading digit", "the initial digit", "the digit in front", "the opening digit",
         "the first numeral"},
        {"in the number", "of that number", "of the secret number", "you were given", "in your number",
         "of the value"},
        {"X?", "equal to X?", "a X?", "the digit X?", "X, yes or no?", "exactly X?"},
        {"", " Reply yes or no.", " One word.", " Be brief.", " Only answer yes or no.", " Just say it."},
    };
  }

  PlantedLandscape(std::uint64_t seed = 0, double floor = 0.562, double ceiling = 0.972, Slots slots = default_slots())
      : slots_(std::move(slots)), floor_(floor), ceiling_(ceiling) {
    if (slots_.empty()) throw Error("bad-config", ErrorKind::config, "landscape needs at least one slot");
    for (std::size_t s = 0; s < slots_.size(); ++s) {
      const auto& opts = slots_[s];
      if (opts.empty()) throw Error("bad-config", ErrorKind::config, "empty landscape slot");
      std::vector<double> w(opts.size());
      const std::size_t best = 1 + hash_all(seed, s, 0xbe57) % std::max<std::size_t>(1, opts.size() - 1);
      for (std::size_t o = 0; o < opts.size(); ++o) {
        if (o == 0)
          w[o] = 0.0;
        else if (o == best)
          w[o] = 1.0;
        else
          w[o] = 0.1 + 0.7 * unit_interval(hash_all(seed, s, o));
      }
      weights_.push_back(std::move(w));
    }
  }

  /// Same phrase space, every weight zero.
  static PlantedLandscape flat(double level = 0.562) {
    PlantedLandscape l(0, level, level);
    for (auto& w : l.weights_) std::fill(w.begin(), w.end(), 0.0);
    return l;
  }

  const Slots& slots() const { return slots_; }

  std::string render(const std::vector<std::size_t>& choice) const {
    std::string out;
    for (std::size_t s = 0; s < slots_.size(); ++s) {
      const std::string& p = slots_[s][choice.at(s)];
      if (s > 0 && !p.empty() && p.front() != ' ') out += ' ';
      out += p;
    }
    return out;
  }

  std::string seed_template() const { return render(std::vector<std::size_t>(slots_.size(), 0)); }

  /// Recovers the phrase choice of a rendered template.
  std::optional<std::vector<std::size_t>> parse(const std::string& text) const {
    std::vector<std::size_t> choice;
    if (match(text, 0, 0, choice)) return choice;
    return std::nullopt;
  }

  double clarity(const std::vector<std::size_t>& choice) const {
    double acc = 0;
    for (std::size_t s = 0; s < slots_.size(); ++s) acc += weights_[s][choice[s]];
    return acc / static_cast<double>(slots_.size());
  }

  double gap_probability(const std::string& text) const {
    auto c = parse(text);
    if (!c) throw Error("unknown-template", ErrorKind::config, text);
    return floor_ + (ceiling_ - floor_) * clarity(*c);
  }

 private:
  bool match(const std::string& text, std::size_t pos, std::size_t slot, std::vector<std::size_t>& choice) const {
    if (slot == slots_.size()) return pos == text.size();
    for (std::size_t o = 0; o < slots_[slot].size(); ++o) {
      std::string p = slots_[slot][o];
      if (slot > 0 && !p.empty() && p.front() != ' ') p = ' ' + p;
      if (text.compare(pos, p.size(), p) != 0) continue;
      choice.push_back(o);
      if (match(text, pos + p.size(), slot + 1, choice)) return true;
      choice.pop_back();
    }
    return false;
  }

  Slots slots_;
  std::vector<std::vector<double>> weights_;
  double floor_, ceiling_;
};

/// Deterministic rewording: each variant swaps the phrase in one or two slots.
/// The stream of variants depends only on (seed, template, call count).
class TemplateMutator : public Rephraser {
 public:
  TemplateMutator(const PlantedLandscape& landscape, std::uint64_t seed) : land_(&landscape), seed_(seed) {}

  std::vector<std::string> rephrase(const std::string& tmpl, std::size_t n) override {
    auto base = land_->parse(tmpl);
    if (!base) throw Error("unknown-template", ErrorKind::config, tmpl);
    Rng rng(hash_all(seed_, hash_string(tmpl), calls_++));
    const auto& slots = land_->slots();
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) {
      auto c = *base;
      const int edits = std::uniform_int_distribution<int>(1, 2)(rng);
      for (int e = 0; e < edits; ++e) {
        const auto s = std::uniform_int_distribution<std::size_t>(0, slots.size() - 1)(rng);
        c[s] = std::uniform_int_distribution<std::size_t>(0, slots[s].size() - 1)(rng);
      }
      out.push_back(land_->render(c));
    }
    return out;
  }

  std::size_t calls() const { return calls_; }

 private:
  const PlantedLandscape* land_;
  std::uint64_t seed_;
  std::size_t calls_ = 0;
};

struct SuffixSearchConfig {
  std::size_t rounds = 10;
  std::size_t keep = 10;
  std::size_t variants = 20;
};

struct ScoredTemplate {
  std::string text;
  double score = 0;
};

struct SuffixSearchResult {
  ScoredTemplate best;
  std::vector<double> history;  // best-so-far score; entry 0 is the seed
  std::vector<ScoredTemplate> beam;
  std::size_t rephraser_calls = 0;
  std::size_t templates_scored = 0;
};

/// Beam search over rewordings. Round 1 expands the seed; later rounds expand
/// every kept template. The beam keeps the top `keep` of survivors and new
/// variants, so the best score never falls.
inline SuffixSearchResult suffix_search(const std::string& seed_template, Rephraser& rephraser,
                                        const TemplateScorer& scorer, const SuffixSearchConfig& cfg = {}) {
  if (cfg.keep == 0 || cfg.variants == 0) throw Error("bad-config", ErrorKind::config, "keep and variants must be > 0");
  SuffixSearchResult res;
  res.beam.push_back({seed_template, scorer(seed_template)});
  res.templates_scored = 1;
  res.best = res.beam.front();
  res.history.push_back(res.best.score);
  std::set<std::string> seen{seed_template};

  auto by_score = [](const ScoredTemplate& a, const ScoredTemplate& b) {
    return a.score != b.score ? a.score > b.score : a.text < b.text;
  };
  for (std::size_t round = 0; round < cfg.rounds; ++round) {
    std::vector<ScoredTemplate> pool = res.beam;
    for (const auto& parent : res.beam) {
      auto variants = rephraser.rephrase(parent.text, cfg.variants);
      ++res.rephraser_calls;
      for (auto& v : variants) {
        if (!seen.insert(v).second) continue;
        pool.push_back({v, scorer(v)});
        ++res.templates_scored;
      }
    }
    std::stable_sort(pool.begin(), pool.end(), by_score);
    if (pool.size() > cfg.keep) pool.resize(cfg.keep);
    res.beam = std::move(pool);
    if (res.beam.front().score > res.best.score) res.best = res.beam.front();
    res.history.push_back(res.best.score);
  }
  return res;
}

}  // namespace specleak::attacks
