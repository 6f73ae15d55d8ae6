#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "specleak/harness/config.hpp"
#include "specleak/harness/conversation.hpp"
#include "specleak/harness/experiment.hpp"
#include "specleak/harness/report.hpp"
#include "specleak/harness/workload.hpp"

using namespace specleak;
using namespace specleak::harness;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("specleak_test_" + name);
  fs::remove_all(p);
  return p;
}

/// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / static_cast<double>(a.size()) -
                             static_cast<double>(j) / static_cast<double>(b.size())));
  }
  return d;
}

// every `step`-th response starting at `first`
std::vector<double> lengths(const Workload& w, std::size_t first, std::size_t step) {
  Workload part = w;
  part.responses.clear();
  for (std::size_t i = first; i < w.responses.size(); i += step) part.responses.push_back(w.responses[i]);
  const auto l = part.payload_lengths();
  return {l.begin(), l.end()};
}

Experiment small_ab(const fs::path& out) {
  Experiment e;
  e.scenario = builtin_scenario("ab");
  std::vector<std::string> prompts(e.scenario.prompts.begin(), e.scenario.prompts.begin() + 8);
  prompts.insert(prompts.end(), e.scenario.prompts.end() - 8, e.scenario.prompts.end());
  e.scenario.prompts = prompts;
  e.scenario.id = "mini";
  e.train_reps = 3;
  e.test_reps = 2;
  e.attack.gmm.min_per_class = 10;
  e.seeds = {0, 1};
  e.out = out;
  return e;
}

}  // namespace

TEST(World, DeterministicAndCached) {
  WorldConfig cfg;
  cfg.seed = 3;
  const World a(cfg), b(cfg);
  ASSERT_EQ(a.prompts().size(), b.prompts().size());
  for (std::size_t i = 0; i < a.prompts().size(); ++i) EXPECT_EQ(a.prompts()[i].text, b.prompts()[i].text);
  EXPECT_EQ(shared_world(0).get(), shared_world(0).get());
}

TEST(Workload, EasySequenceContinuesTheCount) {
  const auto w = gen_workload("easy-sequence", 0);
  ASSERT_FALSE(w.prompts.empty());
  EXPECT_EQ(w.prompts[0], "count : 1 2 3");
  EXPECT_EQ(w.responses[0].substr(0, 10), "4 5 6 7 8 ");
}

TEST(Workload, SecretPromptForm) {
  const auto w = gen_workload("secret-number", 4, 5, 3);
  ASSERT_EQ(w.prompts.size(), 5u);
  for (const auto& p : w.prompts) {
    EXPECT_EQ(p.rfind("The secret number is ", 0), 0u);
    EXPECT_EQ(p.substr(21 + 3), ". Do not reveal it.");
  }
  const auto s = secret_numbers(100, 2, 1);
  EXPECT_EQ(std::set<std::string>(s.begin(), s.end()).size(), 100u);
  EXPECT_THROW(secret_numbers(11, 1, 0), Error);
  EXPECT_THROW(gen_workload("language-11", 0), Error);
  EXPECT_FALSE(known_workload_kind("topic-C"));
}

TEST(Workload, LanguagePayloadLengthsDiffer) {
  const auto l0 = gen_workload("language-0", 0), l3 = gen_workload("language-3", 0);
  const double within = ks_statistic(lengths(l0, 0, 2), lengths(l0, 1, 2));
  const double across = ks_statistic(lengths(l0, 0, 1), lengths(l3, 0, 1));
  RecordProperty("ks_within", std::to_string(within));
  RecordProperty("ks_across", std::to_string(across));
  EXPECT_LT(within, 0.1);
  EXPECT_GT(across, 0.3);
}

TEST(Scenario, BuiltinsAndLabelling) {
  const auto w = shared_world(0);
  const auto ab = builtin_scenario("ab");
  EXPECT_EQ(ab.prompts.size(), 80u);
  const auto lab = label_prompts(ab, *w);
  EXPECT_EQ(std::count(lab.labels.begin(), lab.labels.end(), 0u), 40);
  EXPECT_EQ(lab.names[0], "prefix:count");

  const auto topic = builtin_scenario("topic");
  EXPECT_EQ(topic.turns, 8u);
  EXPECT_EQ(label_prompts(topic, *w).names, (std::vector<std::string>{"topic-A", "topic-B"}));
  EXPECT_EQ(label_prompts(builtin_scenario("languages"), *w).classes(), language_count);

  try {
    builtin_scenario("nope");
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "scenario-not-found");
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }

  Scenario s{"x", {"a", "b"}, {"index", {{"classes", {0, 1}}}}, 10, 1};
  EXPECT_EQ(label_prompts(s, *w).labels, (std::vector<std::size_t>{0, 1}));
  s.predicate = {"index", {{"classes", {0, 0}}}};
  EXPECT_THROW(label_prompts(s, *w), Error);
  s.predicate = {"magic", {}};
  EXPECT_THROW(label_prompts(s, *w), Error);
}

TEST(Scenario, FileRoundTrip) {
  const auto dir = scratch("scenario");
  const auto s = builtin_scenario("topic");
  save_scenario(dir / "sub" / "topic.json", s);
  const auto back = load_scenario(dir / "sub" / "topic.json");
  EXPECT_EQ(back.prompts, s.prompts);
  EXPECT_EQ(back.turns, 8u);
  try {
    load_scenario(dir / "missing.json");
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "scenario-not-found");
  }
  EXPECT_THROW(scenario_from_json(json{{"id", "x"}, {"prompts", json::array()}}), Error);
  fs::remove_all(dir);
}

TEST(Config, ParsesKnownKeysAndRejectsUnknown) {
  const auto c = config_from_json(json::parse(R"({"k": 3, "verify_cost_ms": 20, "seed": 9, "preset": "claude-like",
      "flush_interval_ms": 15, "net": {"one_way_ms": 5}, "policy": {"interval_ms": 20, "flush_at_end": false, "total_slots": 50}})"));
  EXPECT_EQ(c.spec.k, 3);
  EXPECT_EQ(c.spec.verify_cost, millis(20));
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.preset, Preset::claude_like);
  EXPECT_EQ(c.net.one_way_base, millis(5));
  ASSERT_TRUE(c.policy);
  EXPECT_EQ(c.policy->total_slots, 50u);
  EXPECT_EQ(c.setup(nullptr).frame.flush_interval, millis(15));

  const auto d = config_from_json(json::object());
  EXPECT_EQ(d.spec.k, 5);
  EXPECT_EQ(d.spec.draft_step_cost, millis(2));
  EXPECT_EQ(d.spec.baseline_cost, millis(14));
  EXPECT_DOUBLE_EQ(d.spec.jitter_sigma, 0.02);

  for (const char* bad : {R"({"kk": 1})", R"({"k": 0})", R"({"net": {"x": 1}})", R"({"policy": {"interval_ms": 0}})",
                          R"({"preset": "other"})", R"({"k": "five"})", "[1]"}) {
    try {
      config_from_json(json::parse(bad));
      ADD_FAILURE() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::config) << bad;
    }
  }
}

TEST(Numbers, ShortestRoundTrip) {
  for (double v : {0.1, 1.0, 1.0 / 3.0, 1e-9, 123456.789, -2.5}) EXPECT_EQ(std::stod(format_number(v)), v);
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(2), "2");

  std::stringstream ss;
  write_metrics_csv(ss, {{"s", 3, "accuracy", 0.25}});
  const auto rows = read_metrics_csv(ss);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].seed, 3u);
  EXPECT_DOUBLE_EQ(rows[0].value, 0.25);
  std::stringstream bad("nope\n");
  EXPECT_THROW(read_metrics_csv(bad), Error);
}

TEST(Experiment, ReproducibleOutputsAndConsistentConfusion) {
  const auto d1 = scratch("exp1"), d2 = scratch("exp2");
  const auto r1 = run_experiment(small_ab(d1));
  run_experiment(small_ab(d2));
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(d1)) {
    if (!e.is_regular_file()) continue;
    ++files;
    EXPECT_EQ(slurp(e.path()), slurp(d2 / fs::relative(e.path(), d1))) << e.path();
  }
  EXPECT_GE(files, 7u);

  for (const auto& s : r1.seeds) {
    ASSERT_EQ(s.confusion.size(), 2u);
    for (std::size_t c = 0; c < 2; ++c) {
      std::size_t row = 0;
      for (auto v : s.confusion[c]) row += v;
      EXPECT_EQ(row, static_cast<std::size_t>(std::count(s.test_labels.begin(), s.test_labels.end(), c)));
    }
    for (std::size_t i = 0; i < s.test.size(); ++i)
      EXPECT_NE(s.test[i].stream_id.find("/c" + std::to_string(s.test_labels[i]) + "/"), std::string::npos);
    EXPECT_EQ(s.test.size(), 16u * 2u);
  }
  EXPECT_GE(r1.mean("accuracy"), 0.9);
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST(Experiment, HoldoutSplitsPrompts) {
  auto e = small_ab({});
  e.holdout_prompts = true;
  e.seeds = {0};
  e.attack.gmm.min_per_class = 5;
  const auto r = run_experiment(e);
  std::set<std::string> train_prompts, test_prompts;
  auto prompt_of = [](const std::string& id) { return id.substr(id.find("/p"), id.rfind("/r") - id.find("/p")); };
  for (const auto& t : r.seeds[0].train) train_prompts.insert(prompt_of(t.stream_id));
  for (const auto& t : r.seeds[0].test) test_prompts.insert(prompt_of(t.stream_id));
  for (const auto& p : test_prompts) EXPECT_FALSE(train_prompts.count(p)) << p;
  EXPECT_EQ(train_prompts.size(), 8u);
}

TEST(Conversation, VictimStreamsOnly) {
  const auto w = shared_world(0);
  const auto setup = make_setup(Preset::openai_like, w.get());
  const auto openers = w->prompts_of("topic-A", false);
  const auto follow = w->prompts_of("topic-A");
  const auto one = multi_turn_drive(*w, setup, *openers[0], follow, 0, 1, 30, 5);
  EXPECT_EQ(one.capture.size(), 1u);
  EXPECT_EQ(one.conversation.turns.size(), 1u);

  const auto eight = multi_turn_drive(*w, setup, *openers[0], follow, 1, 8, 30, 5, 17);
  EXPECT_EQ(eight.capture.size(), 15u);
  ASSERT_EQ(eight.conversation.turns.size(), 8u);
  EXPECT_EQ(eight.conversation.label, 1u);
  for (const auto& t : eight.conversation.turns) EXPECT_EQ(t.stream_id.rfind("victim/17/", 0), 0u);
  std::size_t replies = 0;
  for (const auto& t : eight.capture) replies += t.stream_id.rfind("reply/", 0) == 0;
  EXPECT_EQ(replies, 7u);
  EXPECT_THROW(multi_turn_drive(*w, setup, *openers[0], follow, 0, 0, 30, 5), Error);
}

TEST(Report, RendersChartsAndSummary) {
  const auto dir = scratch("report");
  try {
    report(dir);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "no-metrics");
  }
  run_experiment(small_ab(dir));
  const auto r = report(dir);
  const auto pr = slurp(dir / "report" / "pr-mini-seed0.svg");
  EXPECT_NE(pr.find("<svg"), std::string::npos);
  EXPECT_NE(pr.find("AUC = "), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "report" / "confusion-mini-seed1.svg"));
  EXPECT_TRUE(fs::exists(dir / "report" / "overlay-mini-seed0.svg"));
  const auto md = slurp(dir / "report" / "summary.md");
  EXPECT_NE(md.find("| mini | accuracy |"), std::string::npos);
  const auto acc = std::find_if(r.summary.begin(), r.summary.end(), [](const auto& m) { return m.metric == "accuracy"; });
  ASSERT_NE(acc, r.summary.end());
  EXPECT_EQ(acc->seeds, 2u);
  EXPECT_LE(acc->min, acc->mean);
  fs::remove_all(dir);
}
