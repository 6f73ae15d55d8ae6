#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "specleak/attacks/model_io.hpp"
#include "specleak/attacks/multiclass.hpp"
#include "specleak/attacks/pr.hpp"
#include "specleak/common.hpp"
#include "specleak/defense/sweep.hpp"
#include "specleak/harness/config.hpp"
#include "specleak/harness/conversation.hpp"
#include "specleak/harness/pipeline.hpp"
#include "specleak/harness/world.hpp"

namespace specleak::harness {

struct Experiment {
  Scenario scenario;
  RunConfig config;
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path out;
  attacks::MulticlassConfig attack;
  std::size_t train_reps = 3;
  std::size_t test_reps = 2;
  bool holdout_prompts = false;  // train on even prompts of each class, test on odd ones
  std::size_t conversations_per_class = 50;
  std::uint64_t world_seed = 0;
};

struct MetricRow {
  std::string scenario;
  std::uint64_t seed = 0;
  std::string metric;
  double value = 0;
};

struct SeedOutcome {
  std::vector<MetricRow> metrics;
  attacks::SignatureClassifier classifier;
  std::vector<Trace> train, test;
  std::vector<std::size_t> train_labels, test_labels;
  std::vector<std::vector<std::size_t>> confusion;
  std::optional<attacks::PrCurve> pr;
  std::vector<double> multi_turn;
};

struct ExperimentResult {
  Labelling labelling;
  std::vector<SeedOutcome> seeds;

  std::vector<MetricRow> metrics() const {
    std::vector<MetricRow> out;
    for (const auto& s : seeds) out.insert(out.end(), s.metrics.begin(), s.metrics.end());
    return out;
  }
  double mean(const std::string& metric) const {
    double acc = 0;
    std::size_t n = 0;
    for (const auto& r : metrics())
      if (r.metric == metric) {
        acc += r.value;
        ++n;
      }
    return n ? acc / static_cast<double>(n) : 0.0;
  }
};

/// Shortest text that reads back as the same double.
inline std::string format_number(double v) {
  for (int digits : {15, 16, 17}) {
    std::ostringstream s;
    s.precision(digits);
    s << v;
    if (digits == 17 || std::stod(s.str()) == v) return s.str();
  }
  return {};
}

inline void write_metrics_csv(std::ostream& os, const std::vector<MetricRow>& rows) {
  os << "scenario,seed,metric,value\n";
  for (const auto& r : rows) os << r.scenario << ',' << r.seed << ',' << r.metric << ',' << format_number(r.value) << '\n';
}

inline std::vector<MetricRow> read_metrics_csv(std::istream& is) {
  std::vector<MetricRow> rows;
  std::string line;
  std::getline(is, line);
  if (line != "scenario,seed,metric,value") throw Error("bad-metrics", ErrorKind::data, "unexpected metrics header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    MetricRow r;
    std::string seed, value;
    if (!std::getline(ss, r.scenario, ',') || !std::getline(ss, seed, ',') || !std::getline(ss, r.metric, ',') ||
        !std::getline(ss, value))
      throw Error("bad-metrics", ErrorKind::data, "malformed metrics row: " + line);
    try {
      r.seed = std::stoull(seed);
      r.value = std::stod(value);
    } catch (const std::exception&) {
      throw Error("bad-metrics", ErrorKind::data, "malformed metrics row: " + line);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

inline void write_pr_csv(std::ostream& os, const attacks::PrCurve& c) {
  os << "threshold,precision,recall\n";
  for (const auto& p : c.points)
    os << format_number(p.threshold) << ',' << format_number(p.precision) << ',' << format_number(p.recall) << '\n';
}

inline void write_confusion_csv(std::ostream& os, const std::vector<std::vector<std::size_t>>& m,
                                const std::vector<std::string>& names) {
  os << "true\\predicted";
  for (const auto& n : names) os << ',' << n;
  os << '\n';
  for (std::size_t i = 0; i < m.size(); ++i) {
    os << names[i];
    for (auto v : m[i]) os << ',' << v;
    os << '\n';
  }
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error("io-error", ErrorKind::data, "cannot write " + p.string());
  return f;
}

inline std::vector<Token> prompt_tokens(const World& world, const std::string& text) {
  const auto* e = world.find_prompt(text);
  return e ? e->tokens : world.tokenize(text);
}

}  // namespace detail

/// One response trace, paced when the run configuration carries a policy.
inline Trace experiment_trace(const World& world, const Setup& setup, const RunConfig& cfg,
                              std::span<const Token> prompt, std::size_t max_tokens, std::uint64_t seed,
                              const std::string& stream_id) {
  specsim::SpeculativeConfig spec = setup.spec;
  spec.seed = hash_all(seed, 0x6e);
  defense::LabelledGeneration g{world.respond(prompt, spec, max_tokens), 0, hash_all(seed, 0x7e)};
  return defense::wire_trace(g, setup.frame, setup.net, cfg.policy ? &*cfg.policy : nullptr, stream_id);
}

inline std::string run_name(const Experiment& exp, std::uint64_t seed) {
  return exp.scenario.id + "-seed" + std::to_string(seed);
}

/// Simulates the scenario for every seed, fits the configured attack on
/// training traces and scores it on held-out traces. With `exp.out` set,
/// writes traces/, models/ and metrics/ beneath it.
inline ExperimentResult run_experiment(const Experiment& exp) {
  validate(exp.scenario);
  const auto world = shared_world(exp.world_seed);
  const Setup setup = exp.config.setup(world.get());
  ExperimentResult res;
  res.labelling = label_prompts(exp.scenario, *world);
  const auto& labels = res.labelling.labels;
  const std::size_t C = res.labelling.classes();
  const auto& sc = exp.scenario;

  std::vector<std::vector<Token>> tokens;
  for (const auto& p : sc.prompts) tokens.push_back(detail::prompt_tokens(*world, p));
  // rank of each prompt within its class, for the prompt hold-out split
  std::vector<std::size_t> rank(sc.prompts.size()), seen(C, 0);
  for (std::size_t i = 0; i < sc.prompts.size(); ++i) rank[i] = seen[labels[i]]++;

  for (const auto seed : exp.seeds) {
    SeedOutcome o;
    std::vector<std::vector<Trace>> train(C), test(C);
    for (std::size_t i = 0; i < sc.prompts.size(); ++i) {
      const std::size_t c = labels[i];
      const bool train_prompt = !exp.holdout_prompts || rank[i] % 2 == 0;
      const bool test_prompt = !exp.holdout_prompts || rank[i] % 2 == 1;
      const std::string tag = "/c" + std::to_string(c) + "/p" + std::to_string(i) + "/r";
      if (train_prompt)
        for (std::size_t r = 0; r < exp.train_reps; ++r) {
          train[c].push_back(experiment_trace(*world, setup, exp.config, tokens[i], sc.max_tokens,
                                              run_seed(hash_all(seed, 0xe1), i, r), "train" + tag + std::to_string(r)));
          o.train.push_back(train[c].back());
          o.train_labels.push_back(c);
        }
      if (test_prompt)
        for (std::size_t r = 0; r < exp.test_reps; ++r) {
          test[c].push_back(experiment_trace(*world, setup, exp.config, tokens[i], sc.max_tokens,
                                             run_seed(hash_all(seed, 0xe2), i, r), "test" + tag + std::to_string(r)));
          o.test.push_back(test[c].back());
          o.test_labels.push_back(c);
        }
    }

    attacks::MulticlassConfig attack = exp.attack;
    attack.gmm.seed = hash_all(attack.gmm.seed, seed);
    attack.convnet.training.seed = hash_all(attack.convnet.training.seed, seed);
    o.classifier = attacks::fit_multiclass(train, attack, res.labelling.names);

    auto add = [&](std::string metric, double v) { o.metrics.push_back({sc.id, seed, std::move(metric), v}); };
    add("train_traces", static_cast<double>(o.train.size()));
    add("test_traces", static_cast<double>(o.test.size()));
    add("accuracy", attacks::accuracy(o.classifier, test));
    o.confusion = attacks::confusion_matrix(o.classifier, test);
    if (C == 2) {
      std::vector<double> scores;
      std::vector<bool> positive;
      for (std::size_t c = 0; c < 2; ++c)
        for (const auto& t : test[c]) {
          const auto s = o.classifier.log_scores(t);
          scores.push_back(s[1] - s[0]);
          positive.push_back(c == 1);
        }
      o.pr = attacks::pr_sweep(scores, positive);
      add("pr_auc", o.pr->auc);
      add("recall_at_precision_1", o.pr->max_recall_at_precision(1.0));
    }

    std::vector<Trace> conv_capture;
    if (sc.turns > 1) {
      std::vector<attacks::Conversation> convs;
      std::size_t conv_id = 0;
      for (std::size_t c = 0; c < C; ++c) {
        std::vector<const PromptEntry*> openers, follow_ups;
        for (std::size_t i = 0; i < sc.prompts.size(); ++i) {
          if (labels[i] != c || (exp.holdout_prompts && rank[i] % 2 == 0)) continue;
          const auto* e = world->find_prompt(sc.prompts[i]);
          if (!e) throw Error("bad-scenario", ErrorKind::data, "multi-turn prompts must be in the world corpus");
          openers.push_back(e);
          // follow-ups come from the same workload, never from prompts used in training
          const auto pool = world->prompts_of(e->workload);
          for (std::size_t j = 0; j < pool.size(); ++j)
            if (pool[j]->follow_up && (!exp.holdout_prompts || j % 2 == 1)) follow_ups.push_back(pool[j]);
        }
        if (follow_ups.empty()) follow_ups = openers;
        for (std::size_t k = 0; k < exp.conversations_per_class; ++k, ++conv_id) {
          const auto& opener = *openers[hash_all(seed, c, k, 0x0b) % openers.size()];
          auto d = multi_turn_drive(*world, setup, opener, follow_ups, c, sc.turns, sc.max_tokens,
                                    hash_all(seed, 0xc0, conv_id), conv_id);
          conv_capture.insert(conv_capture.end(), d.capture.begin(), d.capture.end());
          convs.push_back(std::move(d.conversation));
        }
      }
      o.multi_turn = attacks::multi_turn_accuracy(o.classifier, convs, sc.turns);
      for (std::size_t t = 0; t < o.multi_turn.size(); ++t) add("accuracy_turns_" + std::to_string(t + 1), o.multi_turn[t]);
    }

    if (!exp.out.empty()) {
      const auto name = run_name(exp, seed);
      {
        auto f = detail::open_out(exp.out / "traces" / (name + ".jsonl"));
        write_jsonl(f, o.train);
        write_jsonl(f, o.test);
      }
      if (!conv_capture.empty()) {
        auto f = detail::open_out(exp.out / "traces" / (name + "-conversations.jsonl"));
        write_jsonl(f, conv_capture);
      }
      std::filesystem::create_directories(exp.out / "models");
      attacks::write_model_file((exp.out / "models" / (name + ".json")).string(), attacks::to_json(o.classifier));
      {
        auto f = detail::open_out(exp.out / "metrics" / ("confusion-" + name + ".csv"));
        write_confusion_csv(f, o.confusion, res.labelling.names);
      }
      if (o.pr) {
        auto f = detail::open_out(exp.out / "metrics" / ("pr-" + name + ".csv"));
        write_pr_csv(f, *o.pr);
      }
    }
    res.seeds.push_back(std::move(o));
  }
  if (!exp.out.empty()) {
    auto f = detail::open_out(exp.out / "metrics" / (sc.id + ".csv"));
    write_metrics_csv(f, res.metrics());
  }
  return res;
}

}  // namespace specleak::harness
