// Command-line front end for simulation, capture, attacks, defenses and reports.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "specleak/attacks/http_rephraser.hpp"
#include "specleak/attacks/model_io.hpp"
#include "specleak/capture/pcap.hpp"
#include "specleak/harness/experiment.hpp"
#include "specleak/harness/report.hpp"
#include "specleak/harness/studies.hpp"
#include "specleak/harness/workload.hpp"

namespace fs = std::filesystem;
using namespace specleak;
using namespace specleak::harness;
using nlohmann::json;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::string config;
  std::string out = "out";
  std::string preset;
};

RunConfig run_config(const Globals& g, const CLI::App& app) {
  RunConfig c = g.config.empty() ? RunConfig{} : load_config(g.config);
  if (!g.preset.empty()) c.preset = parse_preset(g.preset);
  if (app.count("--seed") || g.config.empty()) {
    c.seed = g.seed;
    c.spec.seed = g.seed;
  }
  return c;
}

std::vector<Trace> read_traces(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("traces-not-found", ErrorKind::data, path);
  auto t = read_jsonl(f);
  if (t.empty()) throw Error("no-data", ErrorKind::data, "no traces in " + path);
  return t;
}

void write_traces(const fs::path& path, const std::vector<Trace>& traces) {
  auto f = harness::detail::open_out(path);
  write_jsonl(f, traces);
}

void write_metrics(const fs::path& path, const std::vector<MetricRow>& rows) {
  auto f = harness::detail::open_out(path);
  write_metrics_csv(f, rows);
}

// Class index from a "/c<N>/" segment of the stream id, as written by experiments.
std::optional<std::size_t> class_of(const std::string& stream_id) {
  const auto p = stream_id.find("/c");
  if (p == std::string::npos) return std::nullopt;
  std::size_t v = 0, i = p + 2;
  if (i >= stream_id.size() || !std::isdigit(static_cast<unsigned char>(stream_id[i]))) return std::nullopt;
  while (i < stream_id.size() && std::isdigit(static_cast<unsigned char>(stream_id[i]))) v = v * 10 + (stream_id[i++] - '0');
  return v;
}

Scenario resolve_scenario(const std::string& s) {
  if (fs::exists(s)) return load_scenario(s);
  return builtin_scenario(s);
}

const PromptEntry& pick_prompt(const World& w, const std::string& workload, std::size_t index) {
  const auto ps = w.prompts_of(workload);
  if (ps.empty()) throw Error("bad-config", ErrorKind::config, "unknown workload '" + workload + "'");
  if (index >= ps.size())
    throw Error("bad-config", ErrorKind::config, "prompt index out of range (" + std::to_string(ps.size()) + " prompts)");
  return *ps[index];
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw Error("bad-config", ErrorKind::config, "not a number list: " + s);
    }
  }
  if (out.empty()) throw Error("bad-config", ErrorKind::config, "empty list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Timing side channels of speculative decoding: simulate, capture, attack, defend."};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--config", g.config, "Run configuration (JSON)");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--preset", g.preset, "openai-like | claude-like")
      ->check(CLI::IsMember({"openai-like", "claude-like"}));

  std::function<void()> action;
  auto sub = [&](CLI::App* parent, const std::string& name, const std::string& desc) {
    auto* s = parent->add_subcommand(name, desc);
    s->fallthrough();
    return s;
  };

  // sim run
  auto* sim = sub(&app, "sim", "Generate responses in virtual time");
  sim->require_subcommand(1);
  auto* sim_run = sub(sim, "run", "Generate one response and write its events and wire trace");
  std::string sim_workload = "easy-sequence";
  std::size_t sim_index = 0, sim_tokens = 50;
  bool sim_baseline = false;
  sim_run->add_option("--workload", sim_workload, "Workload whose prompt to answer")->capture_default_str();
  sim_run->add_option("--prompt-index", sim_index)->capture_default_str();
  sim_run->add_option("--max-tokens", sim_tokens)->capture_default_str();
  sim_run->add_flag("--baseline", sim_baseline, "One token per target pass instead of speculation");
  sim_run->callback([&] {
    action = [&] {
      const auto cfg = run_config(g, app);
      const auto w = shared_world(0);
      const Setup setup = cfg.setup(w.get());
      const auto& p = pick_prompt(*w, sim_workload, sim_index);
      const auto ev = sim_baseline ? w->respond_baseline(p.tokens, setup.spec, sim_tokens)
                                   : w->respond(p.tokens, setup.spec, sim_tokens);
      auto f = harness::detail::open_out(fs::path(g.out) / "sim" / "events.jsonl");
      for (const auto& e : ev)
        f << json{{"token", e.token}, {"text", w->vocab().decode(std::vector<Token>{e.token})}, {"t_emit_ns", e.t_emit_ns},
                  {"round", e.round}, {"kind", specsim::to_string(e.kind)}}
                 .dump()
          << '\n';
      write_traces(fs::path(g.out) / "traces" / "sim.jsonl", {wire(ev, setup, hash_all(cfg.seed, 0x51), "sim/0")});
      const int rounds = ev.empty() ? 0 : ev.back().round + 1;
      std::printf("prompt: %s\nresponse: %s\ntokens %zu, rounds %d, span %.1f ms\n", p.text.c_str(),
                  w->vocab().decode([&] {
                    std::vector<Token> t;
                    for (const auto& e : ev) t.push_back(e.token);
                    return t;
                  }()).c_str(),
                  ev.size(), rounds, ev.empty() ? 0.0 : static_cast<double>(ev.back().t_emit_ns) / 1e6);
    };
  });

  // workload gen
  auto* wl = sub(&app, "workload", "Prompt workloads and scenarios");
  wl->require_subcommand(1);
  auto* wl_gen = sub(wl, "gen", "Write a workload or a built-in scenario as JSON");
  std::string wl_kind, wl_scenario;
  std::size_t wl_secrets = 100, wl_digits = 3;
  auto* kind_opt = wl_gen->add_option("--kind", wl_kind, "easy-sequence | random-numbers | topic-A | topic-B | language-0..9 | secret-number");
  auto* scen_opt = wl_gen->add_option("--scenario", wl_scenario, "Built-in scenario: ab | topic | languages");
  kind_opt->excludes(scen_opt);
  wl_gen->add_option("--secrets", wl_secrets)->capture_default_str();
  wl_gen->add_option("--digits", wl_digits)->capture_default_str();
  wl_gen->callback([&] {
    action = [&] {
      if (!wl_scenario.empty()) {
        const auto s = builtin_scenario(wl_scenario);
        const auto path = fs::path(g.out) / "scenarios" / (wl_scenario + ".json");
        save_scenario(path, s);
        std::printf("wrote %s (%zu prompts)\n", path.string().c_str(), s.prompts.size());
        return;
      }
      if (wl_kind.empty()) throw Error("bad-config", ErrorKind::config, "need --kind or --scenario");
      const auto w = gen_workload(wl_kind, g.seed, wl_secrets, wl_digits);
      const auto path = fs::path(g.out) / "workloads" / (wl_kind + ".json");
      auto f = harness::detail::open_out(path);
      f << json{{"kind", w.kind}, {"seed", w.seed}, {"prompts", w.prompts}, {"responses", w.responses}}.dump(2) << '\n';
      std::printf("wrote %s (%zu prompts)\n", path.string().c_str(), w.prompts.size());
    };
  });

  // capture
  auto* cap = sub(&app, "capture", "Convert between pcap and JSONL traces");
  cap->require_subcommand(1);
  auto* cap_in = sub(cap, "import-pcap", "Read a classic pcap into JSONL traces");
  std::string pcap_path, pcap_filter, traces_path;
  std::size_t max_packets = 0;
  cap_in->add_option("--pcap", pcap_path, "Capture file")->required();
  cap_in->add_option("--filter", pcap_filter, "Keep only streams of this server, A.B.C.D:port");
  cap_in->add_option("--max-packets", max_packets, "Cap on packets read (0 = all)");
  cap_in->add_option("--traces", traces_path, "Output JSONL (default <out>/traces/imported.jsonl)");
  cap_in->callback([&] {
    action = [&] {
      capture::PcapImportOptions opt;
      if (!pcap_filter.empty()) {
        try {
          opt.server = capture::parse_endpoint_or_throw(pcap_filter);
        } catch (const Error& e) {
          throw Error("bad-config", ErrorKind::config, e.what());
        }
      }
      opt.max_packets = max_packets;
      const auto traces = capture::import_pcap(pcap_path, opt);
      const fs::path out = traces_path.empty() ? fs::path(g.out) / "traces" / "imported.jsonl" : fs::path(traces_path);
      write_traces(out, traces);
      std::size_t n = 0;
      for (const auto& t : traces) n += t.records.size();
      std::printf("imported %zu streams, %zu packets -> %s\n", traces.size(), n, out.string().c_str());
    };
  });
  auto* cap_out = sub(cap, "export-pcap", "Write JSONL traces as a classic pcap");
  bool pcap_usec = false, pcap_be = false;
  std::string export_traces, export_pcap;
  cap_out->add_option("--traces", export_traces, "Input JSONL")->required();
  cap_out->add_option("--pcap", export_pcap, "Output file (default <out>/capture.pcap)");
  cap_out->add_flag("--usec", pcap_usec, "Microsecond timestamps");
  cap_out->add_flag("--big-endian", pcap_be, "Big-endian file header and records");
  cap_out->callback([&] {
    action = [&] {
      const auto traces = read_traces(export_traces);
      capture::PcapExportOptions opt;
      opt.nanosecond = !pcap_usec;
      opt.big_endian = pcap_be;
      const fs::path out = export_pcap.empty() ? fs::path(g.out) / "capture.pcap" : fs::path(export_pcap);
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      capture::export_pcap(traces, out, opt);
      std::printf("exported %zu streams -> %s\n", traces.size(), out.string().c_str());
    };
  });

  // attack
  auto* atk = sub(&app, "attack", "Fit and run timing attacks");
  atk->require_subcommand(1);

  auto* fit = sub(atk, "fit", "Simulate a scenario, fit a classifier and score it");
  std::string scenario = "ab", arch = "gmm";
  std::size_t train_reps = 3, test_reps = 2, n_seeds = 1, epochs = 30;
  bool holdout = false;
  fit->add_option("--scenario", scenario, "Built-in name (ab, topic, languages) or scenario JSON file")->capture_default_str();
  fit->add_option("--arch", arch, "gmm | convnet")->check(CLI::IsMember({"gmm", "convnet"}))->capture_default_str();
  fit->add_option("--train-reps", train_reps)->capture_default_str();
  fit->add_option("--test-reps", test_reps)->capture_default_str();
  fit->add_option("--seeds", n_seeds, "Number of consecutive seeds starting at --seed")->capture_default_str()->check(CLI::PositiveNumber);
  fit->add_option("--epochs", epochs, "ConvNet training epochs")->capture_default_str();
  fit->add_flag("--holdout", holdout, "Test on prompts never seen in training");
  fit->callback([&] {
    action = [&] {
      Experiment e;
      e.scenario = resolve_scenario(scenario);
      e.config = run_config(g, app);
      e.out = g.out;
      e.attack.arch = attacks::parse_arch(arch);
      e.attack.convnet.length = e.scenario.max_tokens;
      e.attack.convnet.training.epochs = epochs;
      e.train_reps = train_reps;
      e.test_reps = test_reps;
      e.holdout_prompts = holdout;
      e.seeds.clear();
      for (std::size_t i = 0; i < n_seeds; ++i) e.seeds.push_back(g.seed + i);
      const auto r = run_experiment(e);
      for (const auto& s : summarize(r.metrics()))
        std::printf("%-24s mean %.4f  min %.4f  max %.4f  (%zu seeds)\n", s.metric.c_str(), s.mean, s.min, s.max, s.seeds);
      std::printf("outputs under %s\n", g.out.c_str());
    };
  });

  auto* infer = sub(atk, "infer", "Classify traces with a saved model");
  std::string model_path, infer_traces;
  infer->add_option("--model", model_path)->required();
  infer->add_option("--traces", infer_traces)->required();
  infer->callback([&] {
    action = [&] {
      const auto clf = attacks::classifier_from_json(attacks::read_model_file(model_path));
      const auto traces = read_traces(infer_traces);
      auto f = harness::detail::open_out(fs::path(g.out) / "predictions.csv");
      f << "stream,predicted,label\n";
      std::size_t labelled = 0, hit = 0;
      for (const auto& t : traces) {
        const auto p = clf.predict(t);
        f << t.stream_id << ',' << p << ',' << clf.labels()[p] << '\n';
        if (auto c = class_of(t.stream_id)) {
          ++labelled;
          hit += *c == p;
        }
      }
      std::printf("classified %zu traces -> %s\n", traces.size(), (fs::path(g.out) / "predictions.csv").string().c_str());
      if (labelled) std::printf("accuracy on %zu labelled traces: %.4f\n", labelled, static_cast<double>(hit) / labelled);
    };
  });

  auto* sweep_pr = sub(atk, "sweep-pr", "Precision/recall sweep of a two-class model over labelled traces");
  std::string pr_model, pr_traces, pr_name = "sweep";
  sweep_pr->add_option("--model", pr_model)->required();
  sweep_pr->add_option("--traces", pr_traces, "Traces whose stream ids carry /c0/ or /c1/")->required();
  sweep_pr->add_option("--name", pr_name, "Suffix of the written pr-<name>.csv")->capture_default_str();
  sweep_pr->callback([&] {
    action = [&] {
      const auto clf = attacks::classifier_from_json(attacks::read_model_file(pr_model));
      if (clf.num_classes() != 2) throw Error("bad-model", ErrorKind::data, "sweep-pr needs a two-class model");
      std::vector<double> scores;
      std::vector<bool> positive;
      for (const auto& t : read_traces(pr_traces)) {
        const auto c = class_of(t.stream_id);
        if (!c || *c > 1) continue;
        const auto s = clf.log_scores(t);
        scores.push_back(s[1] - s[0]);
        positive.push_back(*c == 1);
      }
      if (scores.empty()) throw Error("no-data", ErrorKind::data, "no labelled traces (stream ids need /c0/ or /c1/)");
      const auto pr = attacks::pr_sweep(scores, positive);
      const auto path = fs::path(g.out) / "metrics" / ("pr-" + pr_name + ".csv");
      auto f = harness::detail::open_out(path);
      write_pr_csv(f, pr);
      std::printf("AUC %.4f, recall at precision 1: %.4f -> %s\n", pr.auc, pr.max_recall_at_precision(1.0),
                  path.string().c_str());
    };
  });

  auto* boost = sub(atk, "boost", "1-of-N secret identification by boosting over suffixes");
  BoostStudyConfig bcfg;
  bool no_jitter = false;
  boost->add_option("--secrets", bcfg.secrets)->capture_default_str();
  boost->add_option("--suffixes", bcfg.suffixes)->capture_default_str();
  boost->add_option("--victims", bcfg.victims)->capture_default_str();
  boost->add_option("--digits", bcfg.digits)->capture_default_str();
  boost->add_option("--train-reps", bcfg.train_reps)->capture_default_str();
  boost->add_flag("--no-jitter", no_jitter, "Disable timing jitter");
  boost->callback([&] {
    action = [&] {
      bcfg.jitter = !no_jitter;
      bcfg.seed = g.seed;
      const auto r = boost_study(bcfg);
      write_metrics(fs::path(g.out) / "metrics" / "boost.csv",
                    {{"boost", g.seed, "recovery", r.recovery}, {"boost", g.seed, "best_single_suffix", r.best_single_suffix}});
      std::printf("exact recovery %.4f (best single suffix %.4f), %zu secrets, %zu suffixes\n", r.recovery,
                  r.best_single_suffix, bcfg.secrets, bcfg.suffixes);
    };
  });

  auto* extract = sub(atk, "extract-secret", "Digit-by-digit secret extraction with the second-token oracle");
  std::size_t ex_seeds = 30, ex_reps = 9;
  extract->add_option("--seeds", ex_seeds, "Number of planted secrets")->capture_default_str();
  extract->add_option("--reps", ex_reps, "Queries per digit guess")->capture_default_str();
  extract->callback([&] {
    action = [&] {
      const auto o = oracle_study();
      const auto x = extraction_study(ex_seeds, ex_reps);
      write_metrics(fs::path(g.out) / "metrics" / "extraction.csv",
                    {{"extraction", g.seed, "oracle_agreement", o.agreement},
                     {"extraction", g.seed, "exact", x.exact},
                     {"extraction", g.seed, "candidate_hit", x.candidate_hit},
                     {"extraction", g.seed, "confident", x.confident}});
      std::printf("oracle threshold %.2f ms, agreement %.4f\nexact %.4f, candidate hit %.4f, confident %.4f\n",
                  o.threshold_ms, o.agreement, x.exact, x.candidate_hit, x.confident);
    };
  });

  auto* ss = sub(atk, "suffix-search", "Beam search for a question template with a wide timing gap");
  attacks::SuffixSearchConfig scfg;
  std::size_t probes = 300;
  bool flat = false;
  std::string rephraser_url;
  ss->add_option("--rounds", scfg.rounds)->capture_default_str();
  ss->add_option("--keep", scfg.keep)->capture_default_str();
  ss->add_option("--variants", scfg.variants)->capture_default_str();
  ss->add_option("--probes", probes, "Questions per template score")->capture_default_str();
  ss->add_flag("--flat", flat, "Landscape with no exploitable structure");
  ss->add_option("--rephraser-url", rephraser_url, "Remote rephraser, http://host:port/path");
  ss->callback([&] {
    action = [&] {
      SuffixStudyResult r;
      if (rephraser_url.empty()) {
        r = suffix_search_study(probes, scfg, g.seed, flat);
      } else {
        const Setup setup = make_setup(Preset::openai_like);
        const auto oracle = calibrated_oracle(setup);
        const auto land = flat ? attacks::PlantedLandscape::flat() : attacks::PlantedLandscape(g.seed);
        attacks::HttpRephraser remote(rephraser_url);
        r.search = attacks::suffix_search(land.seed_template(), remote,
                                          measured_rate_scorer(land, setup, oracle, probes, g.seed), scfg);
        r.seed_gap = land.gap_probability(land.seed_template());
        r.best_true_gap = land.gap_probability(r.search.best.text);
      }
      std::vector<MetricRow> rows;
      for (std::size_t i = 0; i < r.search.history.size(); ++i)
        rows.push_back({"suffix-search", g.seed, "best_round_" + std::to_string(i), r.search.history[i]});
      rows.push_back({"suffix-search", g.seed, "rephraser_calls", static_cast<double>(r.search.rephraser_calls)});
      write_metrics(fs::path(g.out) / "metrics" / "suffix-search.csv", rows);
      std::printf("best-so-far:");
      for (double v : r.search.history) std::printf(" %.3f", v);
      std::printf("\nrephraser calls %zu\nbest template: %s\n", r.search.rephraser_calls, r.search.best.text.c_str());
    };
  });

  auto* diff = sub(atk, "difficulty", "White-box suffix search against a known draft/target pair");
  std::size_t suffix_len = 8, budget = 100, trials = 500, prompt_len = 12;
  diff->add_option("--suffix-len", suffix_len)->capture_default_str();
  diff->add_option("--budget", budget, "Coordinate passes")->capture_default_str();
  diff->add_option("--trials", trials, "Queries per prompt when measuring")->capture_default_str();
  diff->add_option("--prompt-len", prompt_len)->capture_default_str();
  diff->callback([&] {
    action = [&] {
      const WhiteBoxWorld wb(g.seed);
      const auto prompts = planted_prompt_pair(wb, prompt_len, g.seed);
      const auto r = whitebox_study(wb, prompts, suffix_len, budget, trials, g.seed);
      write_metrics(fs::path(g.out) / "metrics" / "difficulty.csv",
                    {{"difficulty", g.seed, "initial_rate", r.initial_rate}, {"difficulty", g.seed, "final_rate", r.final_rate}});
      std::printf("distinguishing rate %.4f -> %.4f after %zu objective evaluations\n", r.initial_rate, r.final_rate,
                  r.objective.size());
    };
  });

  // defend
  auto* def = sub(&app, "defend", "Constant-rate pacing");
  def->require_subcommand(1);
  double interval_ms = 10;
  std::uint32_t pad_size = 0;
  std::size_t total_slots = 0;

  auto* pace = sub(def, "pace", "Pace one response and report its cost");
  std::string pace_workload = "random-numbers";
  std::size_t pace_index = 0, pace_tokens = 50;
  pace->add_option("--workload", pace_workload)->capture_default_str();
  pace->add_option("--prompt-index", pace_index)->capture_default_str();
  pace->add_option("--max-tokens", pace_tokens)->capture_default_str();
  pace->add_option("--interval-ms", interval_ms)->capture_default_str();
  pace->add_option("--pad-size", pad_size, "Bytes per packet (0 = one-token packet size)");
  pace->add_option("--total-slots", total_slots, "Fixed stream length in slots (0 = stop when drained)");
  auto policy = [&](const RunConfig& cfg, const CLI::App& cmd) {
    defense::DefensePolicy p = cfg.policy ? *cfg.policy : defense::DefensePolicy{};
    if (cmd.count("--interval-ms") || !cfg.policy) p.interval = millis(interval_ms);
    if (cmd.count("--pad-size")) p.pad_size = pad_size;
    if (cmd.count("--total-slots")) {
      p.total_slots = total_slots;
      p.flush_at_end = total_slots == 0;
    }
    p.validate();
    return p;
  };
  pace->callback([&] {
    action = [&] {
      const auto cfg = run_config(g, app);
      const auto w = shared_world(0);
      const Setup setup = cfg.setup(w.get());
      const auto p = policy(cfg, *pace);
      const auto& prompt = pick_prompt(*w, pace_workload, pace_index);
      const defense::LabelledGeneration gen{w->respond(prompt.tokens, setup.spec, pace_tokens), 0, hash_all(cfg.seed, 0x9a)};
      defense::PacedStream ps;
      const auto plain = defense::wire_trace(gen, setup.frame, setup.net, nullptr, "plain/0");
      const auto paced = defense::wire_trace(gen, setup.frame, setup.net, &p, "paced/0", &ps);
      write_traces(fs::path(g.out) / "traces" / "paced.jsonl", {plain, paced});
      const auto& r = ps.report;
      std::printf("%zu real + %zu pad packets, overhead %.1f%%, added latency mean %.1f ms p90 %.1f ms\n",
                  r.real_packets, r.pad_packets, 100 * r.bandwidth_overhead, r.added_latency.mean_ms,
                  r.added_latency.p90_ms);
    };
  });

  auto* sweep = sub(def, "sweep", "Overhead and latency across pacing intervals");
  std::string sweep_workload = "random-numbers", intervals = "10,20,40,80";
  std::size_t sweep_tokens = 50;
  sweep->add_option("--workload", sweep_workload)->capture_default_str();
  sweep->add_option("--intervals", intervals, "Comma-separated intervals in ms")->capture_default_str();
  sweep->add_option("--max-tokens", sweep_tokens)->capture_default_str();
  sweep->callback([&] {
    action = [&] {
      const auto cfg = run_config(g, app);
      const auto w = shared_world(0);
      const Setup setup = cfg.setup(w.get());
      const auto ps = w->prompts_of(sweep_workload);
      if (ps.empty()) throw Error("bad-config", ErrorKind::config, "unknown workload '" + sweep_workload + "'");
      const auto gens = generate_all(*w, setup, ps, 1, sweep_tokens, hash_all(cfg.seed, 7));
      const auto curve = defense::tradeoff_sweep(gens, parse_list(intervals), setup.frame);
      const auto path = fs::path(g.out) / "metrics" / ("tradeoff-" + sweep_workload + ".csv");
      auto f = harness::detail::open_out(path);
      defense::write_csv(f, curve);
      for (const auto& pt : curve.points)
        std::printf("%6.1f ms: overhead %7.1f%%, latency mean %8.1f ms\n", pt.interval_ms, pt.overhead_pct,
                    pt.latency_ms_mean);
      std::printf("-> %s\n", path.string().c_str());
    };
  });

  auto* eval = sub(def, "evaluate", "Refit attacks on paced traces and measure their accuracy");
  DefenseStudyConfig dcfg;
  eval->add_option("--trials", dcfg.trials)->capture_default_str();
  eval->add_option("--train", dcfg.train, "Training generations per class")->capture_default_str();
  eval->add_option("--interval-ms", interval_ms)->capture_default_str();
  eval->add_option("--total-slots", total_slots, "Fixed stream length in slots (0 = stop when drained)");
  eval->callback([&] {
    action = [&] {
      const auto cfg = run_config(g, app);
      if (cfg.policy) dcfg.policy = *cfg.policy;
      dcfg.policy.interval = millis(interval_ms);
      if (eval->count("--total-slots")) {
        dcfg.policy.total_slots = total_slots;
        dcfg.policy.flush_at_end = total_slots == 0;
      }
      dcfg.policy.validate();
      dcfg.seed = g.seed;
      const auto w = shared_world(0);
      const auto r = defense_study(*w, dcfg);
      std::vector<MetricRow> rows;
      auto add = [&](const std::string& name, const defense::DefenseEvaluation& e) {
        rows.push_back({"defense", g.seed, name + "_undefended", e.accuracy_undefended});
        rows.push_back({"defense", g.seed, name + "_defended", e.accuracy_defended});
        std::printf("%-10s undefended %.4f  defended %.4f (+/- %.3f, chance %.2f)\n", name.c_str(), e.accuracy_undefended,
                    e.accuracy_defended, e.ci95, e.chance);
      };
      add("gmm", r.gmm);
      add("gmm_sizes", r.raw_gmm);
      add("convnet", r.convnet);
      write_metrics(fs::path(g.out) / "metrics" / "defense.csv", rows);
    };
  });

  // report
  auto* rep = sub(&app, "report", "Render plots and a summary from <out>/metrics");
  rep->callback([&] {
    action = [&] {
      const auto r = harness::report(g.out);
      for (const auto& f : r.files) std::printf("%s\n", f.string().c_str());
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  try {
    if (action) action();
    return 0;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.kind() == ErrorKind::config ? 2 : 3;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "error: bad-config: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
