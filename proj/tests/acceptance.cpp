// End-to-end acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "specleak/attacks/convnet.hpp"
#include "specleak/capture/pcap.hpp"
#include "specleak/harness/experiment.hpp"
#include "specleak/harness/studies.hpp"
#include "specleak/harness/workload.hpp"
#include "specleak/stats/gmm.hpp"

using namespace specleak;
using namespace specleak::harness;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

// P(majority of `reps` votes correct) per digit, raised to the digit count.
double majority_bound(double p, int reps, int digits) {
  double per = 0;
  for (int k = reps / 2 + 1; k <= reps; ++k)
    per += std::exp(std::lgamma(reps + 1.0) - std::lgamma(k + 1.0) - std::lgamma(reps - k + 1.0)) * std::pow(p, k) *
           std::pow(1 - p, reps - k);
  return std::pow(per, digits);
}

Outcome speedup(const World& w) {
  const auto easy = speedup_study(w, "easy-sequence", 50);
  const auto hard = speedup_study(w, "random-numbers", 50);
  return {easy.speedup >= 1.8 && hard.speedup < 1.0 && easy.outputs_match && hard.outputs_match,
          "easy " + fmt(easy.speedup) + "x, full-rejection " + fmt(hard.speedup) + "x, outputs match baseline " +
              (easy.outputs_match && hard.outputs_match ? "yes" : "no")};
}

Outcome ab(const World& w) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = ab_study(w, {});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double rec = r.pr.max_recall_at_precision(1.0);
  return {r.accuracy >= 0.95 && rec >= 0.5 && secs < 60,
          "accuracy " + fmt(r.accuracy) + ", recall@precision1 " + fmt(rec) + ", " + fmt(secs, 3) + " s"};
}

Outcome multi_turn() {
  Experiment e;
  e.scenario = builtin_scenario("topic");
  e.holdout_prompts = true;
  e.attack.arch = attacks::Arch::convnet;
  e.attack.convnet.length = e.scenario.max_tokens;
  e.attack.convnet.training.epochs = 30;
  e.train_reps = 2;
  e.test_reps = 1;
  e.seeds.clear();
  for (std::uint64_t s = 0; s < 30; ++s) e.seeds.push_back(s);
  const auto r = run_experiment(e);
  const double a1 = r.mean("accuracy_turns_1"), a8 = r.mean("accuracy_turns_8");
  const bool ok = a8 >= a1 && (a1 < 0.8 || a8 >= 0.95);
  return {ok, "30 seeds, mean accuracy 1 turn " + fmt(a1) + ", 8 turns " + fmt(a8)};
}

Outcome decluster(const World& w) {
  const auto d = decluster_study(w);
  const auto c = count_recovery_study(8.0);
  const bool ok = d.raw_accuracy < d.reconstructed_accuracy && d.reconstructed_accuracy >= 0.95 &&
                  c.accuracy >= 0.999 && c.accuracy >= c.oracle_accuracy - 0.001;
  return {ok, "raw IPD " + fmt(d.raw_accuracy) + " < token delays " + fmt(d.reconstructed_accuracy) + " (" +
                  std::to_string(d.size_clusters) + " size clusters); count recovery at 8 sigma " +
                  fmt(c.accuracy, 6) + " vs interval oracle " + fmt(c.oracle_accuracy, 6)};
}

Outcome boost() {
  BoostStudyConfig small;
  small.secrets = 100;
  small.suffixes = 20;
  small.jitter = false;
  BoostStudyConfig large;
  large.secrets = 1000;
  large.suffixes = 100;
  large.jitter = true;
  const auto a = boost_study(small), b = boost_study(large);
  return {a.recovery == 1.0 && b.recovery >= 0.99,
          "N=100/20 suffixes/no jitter " + fmt(a.recovery) + ", N=1000/100 suffixes/jitter " + fmt(b.recovery)};
}

Outcome oracle_extract() {
  const auto o = oracle_study();
  const auto x = extraction_study(30, 9);
  const double bound = majority_bound(o.agreement, 9, 3);
  return {o.agreement >= 0.94 && x.exact >= 0.95,
          "oracle agreement " + fmt(o.agreement) + " (threshold " + fmt(o.threshold_ms) + " ms), exact extraction " +
              fmt(x.exact) + " over 30 seeds, majority-vote bound " + fmt(bound)};
}

Outcome suffix() {
  const auto r = suffix_search_study();
  const auto& h = r.search.history;
  bool monotone = true;
  for (std::size_t i = 1; i < h.size(); ++i) monotone = monotone && h[i] >= h[i - 1];
  const bool ok = h.back() >= 0.90 && r.search.rephraser_calls == 91 && h.size() == 11 && monotone &&
                  std::abs(r.seed_gap - 0.562) < 1e-12;
  return {ok, "seed gap " + fmt(r.seed_gap) + ", measured " + fmt(h.front()) + " -> " + fmt(h.back()) + ", " +
                  std::to_string(r.search.rephraser_calls) + " rephraser calls, monotone " + (monotone ? "yes" : "no")};
}

Outcome defense_check(const World& w) {
  const DefenseStudyConfig cfg;
  const auto r = defense_study(w, cfg);
  const double limit = 0.55;
  const bool attacks_ok =
      r.gmm.accuracy_defended <= limit && r.raw_gmm.accuracy_defended <= limit && r.convnet.accuracy_defended <= limit;

  // every paced stream must be the same packet sequence regardless of content
  const Setup setup = make_setup(Preset::openai_like, &w);
  const auto gens = ab_generations(w, setup, 200, cfg.max_tokens, 0x1d);
  const auto ref = defense::paced_records(defense::pace(gens[0].events, cfg.policy, setup.frame));
  bool identical = true;
  for (const auto& g : gens) identical = identical && defense::paced_records(defense::pace(g.events, cfg.policy, setup.frame)) == ref;

  const auto& pts = r.tradeoff.points;
  const double o10 = pts.front().overhead_pct, o80 = pts.back().overhead_pct;
  const bool ok = attacks_ok && identical && r.tradeoff.overhead_monotone && r.tradeoff.latency_monotone && o10 >= 50 &&
                  o10 <= 300 && o80 < 10;
  return {ok, "defended accuracy gmm " + fmt(r.gmm.accuracy_defended) + ", gmm+sizes " +
                  fmt(r.raw_gmm.accuracy_defended) + ", convnet " + fmt(r.convnet.accuracy_defended) + " (undefended " +
                  fmt(r.gmm.accuracy_undefended) + "; 1000 trials, ci " + fmt(r.gmm.ci95, 2) +
                  "); paced streams identical " + (identical ? "yes" : "no") + "; overhead 10 ms " + fmt(o10) +
                  "%, 80 ms " + fmt(o80) + "%"};
}

Outcome numerics() {
  // EM monotonicity on random instances
  Rng rng(91);
  std::size_t em_ok = 0;
  const std::size_t instances = 10000;
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t dim = 1 + rng() % 3, k = 1 + rng() % 4, n = 20 + rng() % 60;
    std::normal_distribution<double> nd(0, 1);
    std::vector<double> data(n * dim);
    for (std::size_t j = 0; j < n; ++j) {
      const double shift = 3.0 * static_cast<double>(rng() % k);
      for (std::size_t d = 0; d < dim; ++d) data[j * dim + d] = shift + nd(rng);
    }
    try {
      stats::EmOptions opt;
      opt.max_iter = 100;
      const auto fit = stats::fit_em(data, dim, stats::seeded_init(data, dim, k, rng()), opt);
      bool mono = true;
      for (std::size_t j = 1; j < fit.loglik.size(); ++j) mono = mono && fit.loglik[j] >= fit.loglik[j - 1] - 1e-9;
      em_ok += mono;
    } catch (const Error&) {
    }
  }

  // convnet gradient against central differences
  attacks::ConvNetShape shape{2, 16, 3, 3, 4, 3, 3};
  attacks::ConvNet net(shape);
  net.init(5);
  std::normal_distribution<double> nd(0, 1);
  // nonzero biases keep pre-activations off the relu kink at exactly 0
  for (std::size_t p = shape.off_b1(); p < shape.off_w2(); ++p) net.params()[p] = 0.3 * nd(rng);
  for (std::size_t p = shape.off_b2(); p < shape.off_wd(); ++p) net.params()[p] = 0.3 * nd(rng);
  std::vector<attacks::Sequence> xs;
  std::vector<std::size_t> ys;
  for (std::size_t j = 0; j < 6; ++j) {
    attacks::Sequence x(shape.in_channels * shape.length);
    for (double& v : x) v = nd(rng);
    xs.push_back(x);
    ys.push_back(j % shape.classes);
  }
  std::vector<double> grad;
  net.loss(xs, ys, &grad);
  double diff2 = 0, g2 = 0, f2 = 0;
  const double h = 1e-6;
  for (std::size_t p = 0; p < net.params().size(); ++p) {
    const double keep = net.params()[p];
    net.params()[p] = keep + h;
    const double up = net.loss(xs, ys, nullptr);
    net.params()[p] = keep - h;
    const double dn = net.loss(xs, ys, nullptr);
    net.params()[p] = keep;
    const double fd = (up - dn) / (2 * h);
    diff2 += (fd - grad[p]) * (fd - grad[p]);
    g2 += grad[p] * grad[p];
    f2 += fd * fd;
  }
  const double rel = std::sqrt(diff2) / std::max(std::sqrt(std::max(g2, f2)), 1e-300);

  // pcap export/import round trip
  const auto w = shared_world(0);
  const Setup setup = make_setup(Preset::claude_like, w.get());
  std::vector<Trace> traces;
  const auto ps = w->prompts_of("random-numbers");
  for (std::size_t i = 0; i < 20; ++i) {
    const capture::Endpoint client{{10, 0, 0, 2}, static_cast<std::uint16_t>(50000 + i)};
    traces.push_back(capture_response(*w, setup, ps[i]->tokens, 60, hash_all(3, i),
                                      capture::stream_name(client, {{10, 0, 0, 1}, 443})));
  }
  const auto bytes = capture::export_pcap_bytes(traces);
  auto back = capture::import_pcap_bytes(bytes);
  const bool bytes_ok = capture::export_pcap_bytes(back) == bytes;
  // import orders streams by first packet
  auto by_id = [](const Trace& a, const Trace& b) { return a.stream_id < b.stream_id; };
  std::sort(back.begin(), back.end(), by_id);
  std::sort(traces.begin(), traces.end(), by_id);
  const bool pcap_ok = bytes_ok && back == traces;

  const bool ok = em_ok == instances && rel <= 1e-4 && pcap_ok;
  return {ok, "EM monotone on " + std::to_string(em_ok) + "/" + std::to_string(instances) +
                  " instances; convnet gradient relative error " + fmt(rel, 3) + "; pcap round trip " +
                  (pcap_ok ? "bit-exact" : "mismatch")};
}

}  // namespace

int main() {
  const auto world = shared_world(0);
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, [&] { return speedup(*world); }},
      {2, [&] { return ab(*world); }},
      {3, [] { return multi_turn(); }},
      {4, [&] { return decluster(*world); }},
      {5, [] { return boost(); }},
      {6, [] { return oracle_extract(); }},
      {7, [] { return suffix(); }},
      {8, [&] { return defense_check(*world); }},
      {9, [] { return numerics(); }},
  };
  const auto start = std::chrono::steady_clock::now();
  int failed = 0;
  for (const auto& [id, run] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("criterion %d: %s  %s  [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("acceptance: %d/%zu passed in %.1f s\n", static_cast<int>(criteria.size()) - failed, criteria.size(), total);
  return failed ? 1 : 0;
}
