#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "specleak/attacks/boost.hpp"
#include "specleak/attacks/multiclass.hpp"
#include "specleak/common.hpp"

namespace specleak::attacks {

inline constexpr int model_schema_version = 1;

namespace detail {
using nlohmann::json;

inline json featurizer_json(const Featurizer& f) {
  json j = {{"window", f.spec.window},
            {"pad", f.spec.pad},
            {"include_sizes", f.spec.include_sizes},
            {"source", f.spec.source == TimingSource::token_delays ? "token_delays" : "packet_delays"}};
  if (f.sizes) j["size_model"] = {{"mu", f.sizes->mu}, {"sigma", f.sizes->sigma}, {"weight", f.sizes->weight},
                                  {"fitted_on", f.sizes->fitted_on}, {"chosen_by_bic", f.sizes->chosen_by_bic}};
  return j;
}

inline Featurizer featurizer_from(const json& j) {
  Featurizer f;
  f.spec.window = j.at("window").get<std::size_t>();
  f.spec.pad = j.at("pad").get<double>();
  f.spec.include_sizes = j.at("include_sizes").get<bool>();
  f.spec.source = j.at("source").get<std::string>() == "token_delays" ? TimingSource::token_delays
                                                                     : TimingSource::packet_delays;
  if (j.contains("size_model")) {
    const auto& s = j["size_model"];
    capture::SizeClusterModel m;
    m.mu = s.at("mu").get<std::vector<double>>();
    m.sigma = s.at("sigma").get<std::vector<double>>();
    m.weight = s.at("weight").get<std::vector<double>>();
    m.fitted_on = s.at("fitted_on").get<std::size_t>();
    m.chosen_by_bic = s.at("chosen_by_bic").get<bool>();
    f.sizes = std::move(m);
  }
  return f;
}
}  // namespace detail

inline nlohmann::json to_json(const GmmClassifier& c) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& g : c.classes)
    classes.push_back({{"dim", g.gmm.dim}, {"weights", g.gmm.weights}, {"means", g.gmm.means}, {"vars", g.gmm.vars}});
  return {{"kind", "gmm"},
          {"version", model_schema_version},
          {"params", {{"features", detail::featurizer_json(c.featurizer)}, {"labels", c.labels}, {"classes", classes}}}};
}

inline nlohmann::json to_json(const ConvNetClassifier& c) {
  const auto& s = c.net.shape();
  return {{"kind", "convnet"},
          {"version", model_schema_version},
          {"params",
           {{"shape",
             {{"in_channels", s.in_channels}, {"length", s.length}, {"c1", s.c1}, {"w1", s.w1}, {"c2", s.c2},
              {"w2", s.w2}, {"classes", s.classes}}},
            {"encoder",
             {{"length", c.encoder.length}, {"include_sizes", c.encoder.include_sizes}, {"mean", c.encoder.mean},
              {"stdev", c.encoder.stdev}}},
            {"weights", c.net.params()},
            {"labels", c.labels}}}};
}

inline nlohmann::json to_json(const SignatureClassifier& c) {
  return c.gmm() ? to_json(*c.gmm()) : to_json(*c.convnet());
}

inline nlohmann::json to_json(const BoostEnsemble& e) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& t : e.per_suffix) per.push_back({{"dim", t.dim}, {"means", t.means}, {"var", t.var}});
  return {{"kind", "boost"},
          {"version", model_schema_version},
          {"params", {{"features", detail::featurizer_json(e.featurizer)}, {"per_suffix", per}}}};
}

inline void check_header(const nlohmann::json& j, std::string_view kind) {
  if (!j.is_object() || !j.contains("kind") || !j.contains("version") || !j.contains("params"))
    throw Error("bad-model", ErrorKind::data, "missing kind/version/params");
  if (j["kind"] != kind) throw Error("bad-model", ErrorKind::data, "expected a " + std::string(kind) + " model");
  if (j["version"].get<int>() != model_schema_version)
    throw Error("bad-model", ErrorKind::data, "unsupported model version " + j["version"].dump());
}

inline GmmClassifier gmm_from_json(const nlohmann::json& j) {
  check_header(j, "gmm");
  const auto& p = j["params"];
  GmmClassifier c;
  c.featurizer = detail::featurizer_from(p.at("features"));
  c.labels = p.at("labels").get<std::vector<std::string>>();
  for (const auto& g : p.at("classes")) {
    SignatureGmm s;
    s.gmm.dim = g.at("dim").get<std::size_t>();
    s.gmm.weights = g.at("weights").get<std::vector<double>>();
    s.gmm.means = g.at("means").get<std::vector<double>>();
    s.gmm.vars = g.at("vars").get<std::vector<double>>();
    c.classes.push_back(std::move(s));
  }
  return c;
}

inline ConvNetClassifier convnet_from_json(const nlohmann::json& j) {
  check_header(j, "convnet");
  const auto& p = j["params"];
  const auto& s = p.at("shape");
  ConvNetShape shape{s.at("in_channels").get<std::size_t>(), s.at("length").get<std::size_t>(),
                     s.at("c1").get<std::size_t>(),          s.at("w1").get<std::size_t>(),
                     s.at("c2").get<std::size_t>(),          s.at("w2").get<std::size_t>(),
                     s.at("classes").get<std::size_t>()};
  ConvNetClassifier c;
  c.net = ConvNet(shape);
  auto w = p.at("weights").get<std::vector<double>>();
  if (w.size() != shape.num_params()) throw Error("bad-model", ErrorKind::data, "weight count mismatch");
  c.net.params() = std::move(w);
  const auto& e = p.at("encoder");
  c.encoder.length = e.at("length").get<std::size_t>();
  c.encoder.include_sizes = e.at("include_sizes").get<bool>();
  c.encoder.mean = e.at("mean").get<std::vector<double>>();
  c.encoder.stdev = e.at("stdev").get<std::vector<double>>();
  c.labels = p.at("labels").get<std::vector<std::string>>();
  return c;
}

inline SignatureClassifier classifier_from_json(const nlohmann::json& j) {
  const std::string kind = j.value("kind", "");
  if (kind == "gmm") return gmm_from_json(j);
  if (kind == "convnet") return convnet_from_json(j);
  throw Error("bad-model", ErrorKind::data, "not a classifier model: '" + kind + "'");
}

inline BoostEnsemble boost_from_json(const nlohmann::json& j) {
  check_header(j, "boost");
  const auto& p = j["params"];
  BoostEnsemble e;
  e.featurizer = detail::featurizer_from(p.at("features"));
  for (const auto& t : p.at("per_suffix")) {
    TiedGaussian g;
    g.dim = t.at("dim").get<std::size_t>();
    g.means = t.at("means").get<std::vector<std::vector<double>>>();
    g.var = t.at("var").get<std::vector<double>>();
    e.per_suffix.push_back(std::move(g));
  }
  return e;
}

inline nlohmann::json read_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("model-not-found", ErrorKind::config, path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad-model", ErrorKind::data, e.what());
  }
}

inline void write_model_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error("io-error", ErrorKind::config, "cannot write " + path);
  out << j.dump(1) << '\n';
}

}  // namespace specleak::attacks
