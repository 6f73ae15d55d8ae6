#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "specleak/attacks/boost.hpp"
#include "specleak/attacks/convnet.hpp"
#include "specleak/attacks/gmm_classifier.hpp"
#include "specleak/attacks/pr.hpp"
#include "specleak/attacks/second_token.hpp"
#include "specleak/attacks/suffix_search.hpp"
#include "specleak/capture/signature.hpp"
#include "specleak/common.hpp"
#include "specleak/defense/sweep.hpp"
#include "specleak/harness/pipeline.hpp"
#include "specleak/harness/secrets.hpp"
#include "specleak/harness/whitebox.hpp"
#include "specleak/harness/world.hpp"

// End-to-end drivers shared by the command line, the demos and the acceptance run.

namespace specleak::harness {

// ---------------------------------------------------------------- speedup

struct SpeedupResult {
  double speedup = 0;           // baseline span / speculative span, summed over prompts
  double tokens_per_round = 0;
  bool outputs_match = true;    // speculative output equals baseline greedy output
  std::size_t prompts = 0;
};

inline SpeedupResult speedup_study(const World& world, std::string_view workload, std::size_t max_tokens,
                                   double jitter_sigma = 0.0) {
  specsim::SpeculativeConfig cfg;
  cfg.jitter_sigma = jitter_sigma;
  SpeedupResult r;
  double spec = 0, base = 0;
  std::size_t tokens = 0, rounds = 0;
  for (const auto* p : world.prompts_of(workload)) {
    const auto ev = world.respond(p->tokens, cfg, max_tokens);
    const auto b = world.respond_baseline(p->tokens, cfg, max_tokens);
    spec += static_cast<double>(specsim::span_ns(ev));
    base += static_cast<double>(specsim::span_ns(b));
    tokens += ev.size();
    rounds += ev.empty() ? 0 : static_cast<std::size_t>(ev.back().round + 1);
    r.outputs_match &= std::equal(ev.begin(), ev.end(), b.begin(), b.end(),
                                  [](const auto& x, const auto& y) { return x.token == y.token; });
    ++r.prompts;
  }
  r.speedup = spec > 0 ? base / spec : 0.0;
  r.tokens_per_round = rounds ? static_cast<double>(tokens) / static_cast<double>(rounds) : 0.0;
  return r;
}

// ---------------------------------------------------------------- A/B on raw vs declustered delays

struct AbStudyConfig {
  Preset preset = Preset::openai_like;
  std::string workload_a = "easy-sequence";
  std::string workload_b = "random-numbers";
  std::size_t prompts = 40;  // per class
  std::size_t train = 100;   // traces per class
  std::size_t test = 100;
  std::size_t max_tokens = 50;
  attacks::GmmConfig gmm;
  std::uint64_t seed = 0;
};

struct AbStudyResult {
  double accuracy = 0;
  attacks::PrCurve pr;  // positives are class B
  attacks::GmmClassifier classifier;
  std::vector<Trace> test_a, test_b;
};

/// Train and test traces cycle through the same prompts with independent seeds.
inline std::vector<Trace> ab_traces(const World& world, const Setup& setup, const std::vector<const PromptEntry*>& ps,
                                    std::size_t n, std::size_t max_tokens, std::uint64_t seed, std::size_t stride) {
  std::vector<Trace> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(capture_response(world, setup, ps[(i * stride) % ps.size()]->tokens, max_tokens, hash_all(seed, i)));
  return out;
}

inline AbStudyResult ab_study(const World& world, const AbStudyConfig& cfg) {
  const Setup setup = make_setup(cfg.preset, &world);
  auto a = world.prompts_of(cfg.workload_a), b = world.prompts_of(cfg.workload_b);
  if (a.empty() || b.empty()) throw Error("bad-config", ErrorKind::config, "unknown workload");
  a.resize(std::min(a.size(), cfg.prompts));
  b.resize(std::min(b.size(), cfg.prompts));
  AbStudyResult r;
  const auto train_a = ab_traces(world, setup, a, cfg.train, cfg.max_tokens, hash_all(cfg.seed, 1), 1);
  const auto train_b = ab_traces(world, setup, b, cfg.train, cfg.max_tokens, hash_all(cfg.seed, 2), 1);
  r.test_a = ab_traces(world, setup, a, cfg.test, cfg.max_tokens, hash_all(cfg.seed, 3), 7);
  r.test_b = ab_traces(world, setup, b, cfg.test, cfg.max_tokens, hash_all(cfg.seed, 4), 7);
  attacks::GmmConfig g = cfg.gmm;
  g.seed = hash_all(g.seed, cfg.seed);
  r.classifier = attacks::fit_ab(train_a, train_b, g);
  r.accuracy = attacks::accuracy(r.classifier, {r.test_a, r.test_b});
  std::vector<double> scores;
  std::vector<bool> positive;
  for (const auto& t : r.test_a) scores.push_back(attacks::score_ab(t, r.classifier)), positive.push_back(false);
  for (const auto& t : r.test_b) scores.push_back(attacks::score_ab(t, r.classifier)), positive.push_back(true);
  r.pr = attacks::pr_sweep(scores, positive);
  return r;
}

struct DeclusterResult {
  double raw_accuracy = 0;
  double reconstructed_accuracy = 0;
  std::size_t size_clusters = 0;
};

/// Timer-flushed traces attacked twice: on raw packet delays and on token
/// delays rebuilt from packet sizes.
inline DeclusterResult decluster_study(const World& world, std::uint64_t seed = 0, std::size_t max_tokens = 350,
                                       double lattice_unit = 152) {
  AbStudyConfig cfg;
  cfg.preset = Preset::claude_like;
  cfg.max_tokens = max_tokens;
  cfg.seed = seed;
  DeclusterResult r;
  r.raw_accuracy = ab_study(world, cfg).accuracy;
  cfg.gmm.features.source = attacks::TimingSource::token_delays;
  cfg.gmm.size_fit.init = capture::SizeInit::lattice;
  cfg.gmm.size_fit.lattice_unit = lattice_unit;
  const auto rec = ab_study(world, cfg);
  r.reconstructed_accuracy = rec.accuracy;
  r.size_clusters = rec.classifier.featurizer.sizes ? rec.classifier.featurizer.sizes->mu.size() : 0;
  return r;
}

// ---------------------------------------------------------------- token-count recovery

struct CountRecoveryResult {
  double accuracy = 0;         // fitted model vs truth
  double oracle_accuracy = 0;  // best interval assignment vs truth
};

/// Best accuracy over every assignment of sizes to counts by cut points placed
/// between consecutive sorted sizes, found by dynamic programming over cuts.
inline double interval_oracle_accuracy(std::vector<std::pair<double, std::size_t>> sized, std::size_t counts) {
  std::sort(sized.begin(), sized.end());
  const std::size_t n = sized.size();
  // best[k][i]: most correct labels for the first i sizes using counts 1..k
  std::vector<std::vector<long>> best(counts + 1, std::vector<long>(n + 1, -1));
  best[0][0] = 0;
  for (std::size_t k = 1; k <= counts; ++k) {
    long run_best = -1;  // max over j <= i of best[k-1][j] - hits_k(j)
    std::vector<long> hits(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) hits[i + 1] = hits[i] + (sized[i].second == k);
    for (std::size_t i = 0; i <= n; ++i) {
      if (best[k - 1][i] >= 0) run_best = std::max(run_best, best[k - 1][i] - hits[i]);
      if (run_best >= 0) best[k][i] = run_best + hits[i];
    }
  }
  return static_cast<double>(best[counts][n]) / static_cast<double>(n);
}

/// Synthetic packet sizes base + n * unit + noise for n in 1..counts, with
/// the noise standard deviation set so adjacent clusters sit `separation`
/// sigmas apart.
inline CountRecoveryResult count_recovery_study(double separation, std::size_t samples = 20000,
                                                std::size_t counts = 5, std::uint64_t seed = 0) {
  const double base = 40, unit = 152, sigma = unit / separation;
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  std::vector<double> sizes;
  std::vector<std::size_t> truth;
  for (std::size_t i = 0; i < samples; ++i) {
    const std::size_t n = 1 + i % counts;
    truth.push_back(n);
    sizes.push_back(base + static_cast<double>(n) * unit + noise(rng));
  }
  capture::SizeFitOptions opt;
  opt.init = capture::SizeInit::lattice;
  opt.lattice_unit = unit;
  const auto model = capture::fit_size_clusters(std::span<const double>(sizes), counts, opt);
  std::vector<std::pair<double, std::size_t>> sized;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    hit += capture::tokens_in_packet(sizes[i], model) == truth[i];
    sized.emplace_back(sizes[i], truth[i]);
  }
  CountRecoveryResult r;
  r.accuracy = static_cast<double>(hit) / static_cast<double>(samples);
  r.oracle_accuracy = interval_oracle_accuracy(sized, counts);
  return r;
}

// ---------------------------------------------------------------- 1-of-N boosting

struct BoostStudyConfig {
  std::size_t secrets = 100;
  std::size_t suffixes = 20;
  bool jitter = true;
  std::size_t victims = 200;
  std::size_t train_reps = 3;  // used only with jitter; one noiseless sample is exact
  std::size_t digits = 4;
  std::uint64_t seed = 0;
};

struct BoostStudyResult {
  double recovery = 0;
  double best_single_suffix = 0;
  std::size_t queries = 0;
};

inline BoostStudyResult boost_study(const BoostStudyConfig& cfg) {
  Setup setup = make_setup(Preset::openai_like);
  if (!cfg.jitter) {
    setup.spec.jitter_sigma = 0;
    setup.net.jitter_sigma = 0;
  }
  const auto secrets = secret_numbers(cfg.secrets, cfg.digits, hash_all(cfg.seed, 1));
  PlantedSecretModel model;
  model.world_seed = cfg.seed;
  attacks::BoostConfig bc;
  bc.train_reps = cfg.jitter ? cfg.train_reps : 1;
  const auto ens = attacks::boost_fit(
      cfg.secrets, cfg.suffixes,
      [&](std::size_t i, std::size_t j, std::uint64_t r) { return model.query(secrets[i], j, setup, hash_all(cfg.seed, 10, i, j, r)); },
      bc);
  BoostStudyResult res;
  std::size_t ok = 0;
  std::vector<std::size_t> single(cfg.suffixes, 0);
  for (std::size_t v = 0; v < cfg.victims; ++v) {
    const std::size_t truth = hash_all(cfg.seed, 20, v) % cfg.secrets;
    std::vector<Trace> seen;
    const auto pred = attacks::boost_infer(ens, [&](std::size_t j) {
      seen.push_back(model.query(secrets[truth], j, setup, hash_all(cfg.seed, 30, v, j)));
      return seen.back();
    });
    ok += pred == truth;
    for (std::size_t j = 0; j < cfg.suffixes; ++j) single[j] += ens.predict_single(j, seen[j]) == truth;
    res.queries += seen.size();
  }
  res.recovery = static_cast<double>(ok) / static_cast<double>(cfg.victims);
  res.best_single_suffix =
      static_cast<double>(*std::max_element(single.begin(), single.end())) / static_cast<double>(cfg.victims);
  return res;
}

// ---------------------------------------------------------------- second-token oracle and extraction

/// Calibrates on a responder whose one template always reveals the guess.
inline attacks::SecondTokenOracle calibrated_oracle(const Setup& setup, std::size_t per_class = 100,
                                                    std::uint64_t seed = 99) {
  specsim::ScriptedGapResponder cal("4", seed);
  cal.set_template("cal", 1.0);
  GapVictim v{&cal, "cal", setup};
  std::vector<Trace> accepted, rejected;
  for (std::size_t i = 0; i < per_class; ++i) {
    accepted.push_back(v.ask(0, 4, hash_all(seed, 1, i)));
    rejected.push_back(v.ask(0, static_cast<int>(i % 9) < 4 ? static_cast<int>(i % 9) : static_cast<int>(i % 9) + 1,
                             hash_all(seed, 2, i)));
  }
  return attacks::calibrate_second_token_oracle(accepted, rejected);
}

struct OracleStudyResult {
  double threshold_ms = 0;
  double agreement = 0;  // oracle call vs whether the guess was right
};

inline OracleStudyResult oracle_study(const std::string& template_id = "q7", std::size_t queries = 1000,
                                      std::uint64_t seed = 0) {
  const Setup setup = make_setup(Preset::openai_like);
  const auto oracle = calibrated_oracle(setup);
  specsim::ScriptedGapResponder victim("527", seed);
  victim.load_ladder();
  GapVictim v{&victim, template_id, setup};
  std::size_t agree = 0;
  for (std::size_t i = 0; i < queries; ++i) {
    const std::size_t pos = i % 3;
    const int guess = static_cast<int>((i / 3) % 10);
    const bool fast = oracle(v.ask(pos, guess, hash_all(seed, 3, i))) == attacks::FirstToken::accepted;
    agree += fast == victim.guess_correct({template_id, pos, guess});
  }
  return {static_cast<double>(oracle.threshold_ns) / 1e6, static_cast<double>(agree) / static_cast<double>(queries)};
}

struct ExtractionStudyResult {
  double exact = 0;          // fraction of seeds whose best guess is the secret
  double candidate_hit = 0;  // fraction whose candidate set contains the secret
  double confident = 0;
};

inline ExtractionStudyResult extraction_study(std::size_t seeds = 30, std::size_t reps = 9,
                                              const std::string& template_id = "q7", std::size_t digits = 3) {
  const Setup setup = make_setup(Preset::openai_like);
  const auto oracle = calibrated_oracle(setup);
  ExtractionStudyResult r;
  for (std::size_t s = 0; s < seeds; ++s) {
    const auto secret = secret_numbers(1, digits, hash_all(s, 0x5ec))[0];
    specsim::ScriptedGapResponder victim(secret, s);
    victim.load_ladder();
    GapVictim v{&victim, template_id, setup};
    const auto ex = attacks::extract_secret(
        [&](std::size_t p, int g, std::uint64_t rep) { return v.ask(p, g, hash_all(s, p, static_cast<std::uint64_t>(g), rep)); },
        oracle, {digits, reps, 2});
    r.exact += ex.digits == secret;
    const auto cands = attacks::candidate_secrets(ex);
    r.candidate_hit += std::find(cands.begin(), cands.end(), secret) != cands.end();
    r.confident += ex.confident();
  }
  const double n = static_cast<double>(seeds);
  r.exact /= n;
  r.candidate_hit /= n;
  r.confident /= n;
  return r;
}

// ---------------------------------------------------------------- suffix search

/// Scores a template by its measured distinguishing rate: `probes` digit
/// questions against a responder planted with the template's gap, half of
/// them with the right digit, each judged by the second-token oracle.
inline attacks::TemplateScorer measured_rate_scorer(const attacks::PlantedLandscape& land, const Setup& setup,
                                                    const attacks::SecondTokenOracle& oracle, std::size_t probes,
                                                    std::uint64_t seed) {
  auto calls = std::make_shared<std::size_t>(0);
  return [&land, setup, oracle, probes, seed, calls](const std::string& text) {
    specsim::ScriptedGapResponder r("0123456789", hash_all(seed, hash_string(text)));
    r.set_template("t", land.gap_probability(text));
    GapVictim v{&r, "t", setup};
    std::size_t ok = 0;
    for (std::size_t i = 0; i < probes; ++i) {
      const std::size_t pos = i % 10;
      const int guess = (i / 10) % 2 ? static_cast<int>(pos) : static_cast<int>((pos + 1 + i % 9) % 10);
      const bool fast = oracle(v.ask(pos, guess, hash_all(seed, *calls, i))) == attacks::FirstToken::accepted;
      ok += fast == r.guess_correct({"t", pos, guess});
    }
    ++*calls;
    return static_cast<double>(ok) / static_cast<double>(probes);
  };
}

struct SuffixStudyResult {
  attacks::SuffixSearchResult search;
  double seed_gap = 0;
  double best_true_gap = 0;
};

inline SuffixStudyResult suffix_search_study(std::size_t probes = 300, const attacks::SuffixSearchConfig& cfg = {},
                                             std::uint64_t seed = 0, bool flat = false) {
  const Setup setup = make_setup(Preset::openai_like);
  const auto oracle = calibrated_oracle(setup);
  const auto land = flat ? attacks::PlantedLandscape::flat() : attacks::PlantedLandscape(seed);
  attacks::TemplateMutator mutator(land, seed);
  SuffixStudyResult r;
  r.search = attacks::suffix_search(land.seed_template(), mutator, measured_rate_scorer(land, setup, oracle, probes, seed), cfg);
  r.seed_gap = land.gap_probability(land.seed_template());
  r.best_true_gap = land.gap_probability(r.search.best.text);
  return r;
}

// ---------------------------------------------------------------- defense

struct DefenseStudyConfig {
  std::string workload = "random-numbers";
  std::vector<double> intervals_ms{10, 20, 40, 80};
  std::size_t max_tokens = 50;
  std::size_t train = 100;  // per class
  std::size_t trials = 1000;
  defense::DefensePolicy policy = [] {
    defense::DefensePolicy p;
    p.flush_at_end = false;
    p.total_slots = 160;
    return p;
  }();
  std::uint64_t seed = 0;
};

struct DefenseStudyResult {
  defense::TradeoffCurve tradeoff;
  defense::DefenseEvaluation gmm;
  defense::DefenseEvaluation raw_gmm;  // packet-delay features plus sizes
  defense::DefenseEvaluation convnet;  // delay and size channels
};

inline std::vector<defense::LabelledGeneration> ab_generations(const World& world, const Setup& setup,
                                                               std::size_t n, std::size_t max_tokens,
                                                               std::uint64_t seed) {
  const auto easy = world.prompts_of("easy-sequence"), hard = world.prompts_of("random-numbers");
  std::vector<defense::LabelledGeneration> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % 2;
    const auto& ps = c ? hard : easy;
    specsim::SpeculativeConfig cfg = setup.spec;
    cfg.seed = hash_all(seed, i, 1);
    out.push_back({world.respond(ps[hash_all(seed, i, 2) % ps.size()]->tokens, cfg, max_tokens), c, hash_all(seed, i, 3)});
  }
  return out;
}

inline DefenseStudyResult defense_study(const World& world, const DefenseStudyConfig& cfg) {
  const Setup setup = make_setup(Preset::openai_like, &world);
  DefenseStudyResult r;
  const auto gens = generate_all(world, setup, world.prompts_of(cfg.workload), 1, cfg.max_tokens, hash_all(cfg.seed, 7));
  r.tradeoff = defense::tradeoff_sweep(gens, cfg.intervals_ms, setup.frame);
  const auto train = ab_generations(world, setup, 2 * cfg.train, cfg.max_tokens, hash_all(cfg.seed, 8));
  const auto test = ab_generations(world, setup, cfg.trials, cfg.max_tokens, hash_all(cfg.seed, 9));
  r.gmm = defense::evaluate_defense([](const auto& bc) { return attacks::fit_gmm_classifier(bc, {}); }, train, test,
                                    cfg.policy, setup.frame, setup.net);
  attacks::GmmConfig with_sizes;
  with_sizes.features.include_sizes = true;
  r.raw_gmm = defense::evaluate_defense([&](const auto& bc) { return attacks::fit_gmm_classifier(bc, with_sizes); },
                                        train, test, cfg.policy, setup.frame, setup.net);
  attacks::ConvNetConfig cn;
  cn.include_sizes = true;
  cn.training.epochs = 30;
  cn.training.seed = cfg.seed;
  r.convnet = defense::evaluate_defense([&](const auto& bc) { return attacks::fit_convnet(bc, cn); }, train, test,
                                        cfg.policy, setup.frame, setup.net);
  return r;
}

// ---------------------------------------------------------------- white-box suffix search

struct WhiteBoxStudyResult {
  double initial_rate = 0;
  double final_rate = 0;
  std::vector<double> objective;
  std::vector<Token> suffix;
};

/// Two prompts whose target logits both lie within `bound` of zero but differ
/// by at least `min_gap`, found by scanning seeded random prompts.
inline std::vector<std::vector<Token>> planted_prompt_pair(const WhiteBoxWorld& wb, std::size_t len, std::uint64_t seed,
                                                           double min_gap = 8.0, double bound = 8.0) {
  std::vector<std::vector<Token>> lo, hi;
  for (std::uint64_t i = 0;; ++i) {
    auto p = wb.random_prompt(len, hash_all(seed, i));
    const double a = wb.target.logit(p) - wb.target.bias;
    if (a <= -min_gap / 2 && a >= -bound && lo.empty()) lo.push_back(std::move(p));
    else if (a >= min_gap / 2 && a <= bound && hi.empty()) hi.push_back(std::move(p));
    if (!lo.empty() && !hi.empty()) return {lo[0], hi[0]};
  }
}

inline WhiteBoxStudyResult whitebox_study(const WhiteBoxWorld& wb, const std::vector<std::vector<Token>>& prompts,
                                          std::size_t suffix_len = 8, std::size_t budget = 100,
                                          std::size_t trials_per_prompt = 500, std::uint64_t seed = 0) {
  const auto oracle = calibrated_oracle(wb.setup);
  const auto vocab = wb.tokens();
  const auto init = wb.random_prompt(suffix_len, hash_all(seed, 0x1a));
  const auto obj = attacks::timing_gap_objective(wb.scorer(), prompts);
  const auto res = attacks::greedy_coordinate_search(obj, init, vocab, {budget, 0, seed});
  WhiteBoxStudyResult r;
  r.initial_rate = wb.distinguishing_rate(prompts, init, oracle, trials_per_prompt, hash_all(seed, 1));
  r.final_rate = wb.distinguishing_rate(prompts, res.suffix, oracle, trials_per_prompt, hash_all(seed, 2));
  r.objective = res.history;
  r.suffix = res.suffix;
  return r;
}

}  // namespace specleak::harness
