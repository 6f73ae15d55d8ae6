#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "specleak/common.hpp"
#include "specleak/defense/pace.hpp"
#include "specleak/harness/pipeline.hpp"
#include "specleak/harness/world.hpp"

namespace specleak::harness {

using nlohmann::json;

/// Which prompts satisfy which class.
///   prefix:   {"prefix": "count"}   class 0 if the prompt starts with prefix, else 1
///   index:    {"classes": [0,1,...]} explicit class per prompt
///   workload: {}                    one class per world workload, in order of first use
struct Predicate {
  std::string name = "workload";
  json params = json::object();
};

struct Scenario {
  std::string id;
  std::vector<std::string> prompts;
  Predicate predicate;
  std::size_t max_tokens = 50;
  std::size_t turns = 1;
};

/// Class of every prompt plus class names.
struct Labelling {
  std::vector<std::size_t> labels;
  std::vector<std::string> names;

  std::size_t classes() const { return names.size(); }
};

inline Labelling label_prompts(const Scenario& s, const World& world) {
  Labelling out;
  const auto& p = s.predicate;
  if (p.name == "prefix") {
    const auto prefix = p.params.value("prefix", std::string());
    if (prefix.empty()) throw Error("bad-config", ErrorKind::config, "prefix predicate needs a non-empty prefix");
    out.names = {"prefix:" + prefix, "other"};
    for (const auto& text : s.prompts) out.labels.push_back(text.rfind(prefix, 0) == 0 ? 0 : 1);
  } else if (p.name == "index") {
    const auto cls = p.params.value("classes", std::vector<std::size_t>());
    if (cls.size() != s.prompts.size())
      throw Error("bad-config", ErrorKind::config, "index predicate needs one class per prompt");
    out.labels = cls;
    const std::size_t n = cls.empty() ? 0 : *std::max_element(cls.begin(), cls.end()) + 1;
    for (std::size_t c = 0; c < n; ++c) out.names.push_back("class" + std::to_string(c));
  } else if (p.name == "workload") {
    std::map<std::string, std::size_t> ids;
    for (const auto& text : s.prompts) {
      const auto* e = world.find_prompt(text);
      if (!e) throw Error("bad-scenario", ErrorKind::data, "prompt not in the world corpus: '" + text + "'");
      auto [it, inserted] = ids.emplace(e->workload, out.names.size());
      if (inserted) out.names.push_back(e->workload);
      out.labels.push_back(it->second);
    }
  } else {
    throw Error("bad-config", ErrorKind::config, "unknown predicate '" + p.name + "'");
  }
  std::vector<std::size_t> count(out.names.size(), 0);
  for (auto l : out.labels) ++count[l];
  if (count.size() < 2 || std::find(count.begin(), count.end(), std::size_t{0}) != count.end())
    throw Error("bad-scenario", ErrorKind::config, "predicate must split prompts into at least two nonempty classes");
  return out;
}

inline void validate(const Scenario& s) {
  if (s.id.empty()) throw Error("bad-scenario", ErrorKind::config, "scenario id is empty");
  if (s.prompts.empty()) throw Error("bad-scenario", ErrorKind::config, "scenario has no prompts");
  if (s.max_tokens < 1) throw Error("bad-scenario", ErrorKind::config, "max_tokens must be >= 1");
  if (s.turns < 1) throw Error("bad-scenario", ErrorKind::config, "turns must be >= 1");
}

inline json to_json(const Scenario& s) {
  return {{"id", s.id},
          {"prompts", s.prompts},
          {"predicate", {{"name", s.predicate.name}, {"params", s.predicate.params}}},
          {"max_tokens", s.max_tokens},
          {"turns", s.turns}};
}

inline Scenario scenario_from_json(const json& j) {
  Scenario s;
  try {
    s.id = j.at("id").get<std::string>();
    s.prompts = j.at("prompts").get<std::vector<std::string>>();
    if (j.contains("predicate")) {
      s.predicate.name = j["predicate"].at("name").get<std::string>();
      s.predicate.params = j["predicate"].value("params", json::object());
    }
    const auto max_tokens = j.value("max_tokens", std::int64_t{50});
    const auto turns = j.value("turns", std::int64_t{1});
    if (max_tokens < 1 || turns < 1) throw Error("bad-scenario", ErrorKind::config, "max_tokens and turns must be >= 1");
    s.max_tokens = static_cast<std::size_t>(max_tokens);
    s.turns = static_cast<std::size_t>(turns);
  } catch (const json::exception& e) {
    throw Error("bad-scenario", ErrorKind::config, e.what());
  }
  validate(s);
  return s;
}

inline json read_json_file(const std::filesystem::path& path, const char* missing_code) {
  std::ifstream in(path);
  if (!in) throw Error(missing_code, ErrorKind::config, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error("bad-config", ErrorKind::config, path.string() + ": " + e.what());
  }
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  return scenario_from_json(read_json_file(path, "scenario-not-found"));
}

inline void save_scenario(const std::filesystem::path& path, const Scenario& s) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("io-error", ErrorKind::data, "cannot write " + path.string());
  out << to_json(s).dump(2) << "\n";
}

/// Run configuration: timing keys at the top level, plus optional framing,
/// network and pacing sections.
///
///   {"k": 5, "draft_step_cost_ms": 2, "verify_cost_ms": 14, "baseline_cost_ms": 14,
///    "jitter_sigma": 0.02, "seed": 0, "bonus_token": false,
///    "preset": "openai-like", "flush_interval_ms": 30,
///    "net": {"one_way_ms": 20, "jitter_sigma": 0.05},
///    "policy": {"interval_ms": 10, "pad_size": 0, "flush_at_end": true, "total_slots": 0}}
struct RunConfig {
  Preset preset = Preset::openai_like;
  specsim::SpeculativeConfig spec;
  std::optional<double> flush_interval_ms;
  wirechan::NetModel net;
  std::optional<defense::DefensePolicy> policy;
  std::uint64_t seed = 0;

  Setup setup(const World* world) const {
    Setup s = make_setup(preset, world);
    s.spec = spec;
    if (flush_interval_ms) s.frame.flush_interval = millis(*flush_interval_ms);
    s.net = net;
    s.spec.validate();
    s.frame.validate();
    s.net.validate();
    return s;
  }
};

namespace detail {

inline void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw Error("bad-config", ErrorKind::config, "unknown key '" + it.key() + "' in " + where);
}

inline double positive_ms(const json& j, const char* key, double fallback) {
  const double v = j.value(key, fallback);
  if (!(v > 0)) throw Error("bad-config", ErrorKind::config, std::string(key) + " must be > 0");
  return v;
}

}  // namespace detail

inline defense::DefensePolicy policy_from_json(const json& j) {
  detail::reject_unknown(j, {"interval_ms", "pad_size", "flush_at_end", "total_slots", "max_queue"}, "policy");
  defense::DefensePolicy p;
  try {
    p.interval = millis(detail::positive_ms(j, "interval_ms", 10.0));
    p.pad_size = j.value("pad_size", 0u);
    p.flush_at_end = j.value("flush_at_end", true);
    p.total_slots = j.value("total_slots", std::size_t{0});
    p.max_queue = j.value("max_queue", std::size_t{0});
  } catch (const json::exception& e) {
    throw Error("bad-config", ErrorKind::config, std::string("policy: ") + e.what());
  }
  p.validate();
  return p;
}

inline RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw Error("bad-config", ErrorKind::config, "config must be a JSON object");
  detail::reject_unknown(j,
                         {"k", "draft_step_cost_ms", "verify_cost_ms", "baseline_cost_ms", "jitter_sigma", "seed",
                          "bonus_token", "preset", "flush_interval_ms", "net", "policy"},
                         "config");
  RunConfig c;
  try {
    if (j.contains("preset")) c.preset = parse_preset(j["preset"].get<std::string>());
    const auto k = j.value("k", std::int64_t{5});
    if (k < 1) throw Error("bad-config", ErrorKind::config, "k must be >= 1");
    c.spec.k = static_cast<int>(k);
    c.spec.draft_step_cost = millis(detail::positive_ms(j, "draft_step_cost_ms", 2.0));
    c.spec.verify_cost = millis(detail::positive_ms(j, "verify_cost_ms", 14.0));
    c.spec.baseline_cost = millis(detail::positive_ms(j, "baseline_cost_ms", 14.0));
    c.spec.jitter_sigma = j.value("jitter_sigma", 0.02);
    c.spec.bonus_token = j.value("bonus_token", false);
    c.seed = j.value("seed", std::uint64_t{0});
    c.spec.seed = c.seed;
    if (j.contains("flush_interval_ms")) c.flush_interval_ms = j["flush_interval_ms"].get<double>();
    if (j.contains("net")) {
      const auto& n = j["net"];
      detail::reject_unknown(n, {"one_way_ms", "jitter_sigma"}, "net");
      c.net.one_way_base = millis(n.value("one_way_ms", 20.0));
      c.net.jitter_sigma = n.value("jitter_sigma", 0.05);
    }
    if (j.contains("policy")) c.policy = policy_from_json(j["policy"]);
  } catch (const json::exception& e) {
    throw Error("bad-config", ErrorKind::config, e.what());
  }
  c.spec.validate();
  c.net.validate();
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  return config_from_json(read_json_file(path, "config-not-found"));
}

}  // namespace specleak::harness
