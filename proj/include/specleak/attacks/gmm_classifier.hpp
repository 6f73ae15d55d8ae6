#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "specleak/attacks/features.hpp"
#include "specleak/common.hpp"
#include "specleak/stats/gmm.hpp"
#include "specleak/wirechan/trace.hpp"

namespace specleak::attacks {

struct GmmConfig {
  FeatureSpec features;
  std::size_t components = 3;
  double var_floor = 1e-8;  // seconds^2
  double tol = 1e-8;
  int max_iter = 500;
  std::uint64_t seed = 0;
  std::size_t size_clusters = 0;  // for token-delay features; 0 = BIC
  std::size_t max_size_clusters = 12;
  capture::SizeFitOptions size_fit;
  std::size_t min_per_class = 20;
};

/// One class's mixture over fixed-length feature vectors.
struct SignatureGmm {
  stats::DiagGmm gmm;
  std::vector<double> loglik;  // EM trace, mean per-sample

  double log_likelihood(std::span<const double> x) const { return gmm.log_density(x); }
};

inline SignatureGmm fit_signature_gmm(std::span<const FeatureVector> samples, const GmmConfig& cfg,
                                      std::uint64_t seed) {
  if (samples.empty()) throw Error("empty-class", ErrorKind::data, "no traces for a class");
  const std::size_t dim = samples.front().size();
  std::vector<double> data;
  data.reserve(samples.size() * dim);
  for (const auto& s : samples) {
    if (s.size() != dim) throw Error("bad-data", ErrorKind::data, "feature length mismatch");
    data.insert(data.end(), s.begin(), s.end());
  }
  const std::size_t k = std::min(cfg.components, samples.size());
  auto init = stats::seeded_init(data, dim, k, seed);
  stats::EmOptions em;
  em.tol = cfg.tol;
  em.max_iter = cfg.max_iter;
  em.var_floor = cfg.var_floor;
  auto res = stats::fit_em(data, dim, std::move(init), em);
  return SignatureGmm{std::move(res.model), std::move(res.loglik)};
}

/// Per-class GMMs scored by total log-likelihood. With two classes this is the
/// A/B test: score = logL_B - logL_A, negative means A.
struct GmmClassifier {
  Featurizer featurizer;
  std::vector<SignatureGmm> classes;
  std::vector<std::string> labels;
  std::vector<std::string> warnings;

  std::size_t num_classes() const { return classes.size(); }

  std::vector<double> log_scores(const FeatureVector& x) const {
    std::vector<double> out;
    out.reserve(classes.size());
    for (const auto& c : classes) out.push_back(c.log_likelihood(x));
    return out;
  }
  std::vector<double> log_scores(const Trace& t) const { return log_scores(featurizer(t)); }

  std::size_t predict(const Trace& t) const {
    const auto s = log_scores(t);
    return static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
  }
};

inline GmmClassifier fit_gmm_classifier(const std::vector<std::vector<Trace>>& by_class, const GmmConfig& cfg,
                                        std::vector<std::string> labels = {}) {
  if (by_class.empty()) throw Error("empty-class", ErrorKind::data, "no classes");
  std::vector<Trace> all;
  std::size_t lo = std::numeric_limits<std::size_t>::max(), hi = 0;
  for (const auto& c : by_class) {
    if (c.empty()) throw Error("empty-class", ErrorKind::data, "a class has no traces");
    lo = std::min(lo, c.size());
    hi = std::max(hi, c.size());
    all.insert(all.end(), c.begin(), c.end());
  }
  if (lo < cfg.min_per_class)
    throw Error("too-few-traces", ErrorKind::data,
                "need " + std::to_string(cfg.min_per_class) + " traces per class, got " + std::to_string(lo));

  GmmClassifier clf;
  clf.featurizer = make_featurizer(cfg.features, all, cfg.size_clusters, cfg.max_size_clusters, cfg.size_fit);
  if (hi > 10 * lo) clf.warnings.push_back("class imbalance above 10:1");
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    std::vector<FeatureVector> xs;
    xs.reserve(by_class[c].size());
    for (const auto& t : by_class[c]) xs.push_back(clf.featurizer(t));
    clf.classes.push_back(fit_signature_gmm(xs, cfg, hash_all(cfg.seed, c)));
  }
  if (labels.empty())
    for (std::size_t c = 0; c < by_class.size(); ++c) labels.push_back("class" + std::to_string(c));
  clf.labels = std::move(labels);
  return clf;
}

inline GmmClassifier fit_ab(const std::vector<Trace>& traces_a, const std::vector<Trace>& traces_b,
                            const GmmConfig& cfg = {}) {
  return fit_gmm_classifier({traces_a, traces_b}, cfg, {"A", "B"});
}

/// logL_B - logL_A; negative values favour A.
inline double score_ab(const Trace& trace, const GmmClassifier& pair) {
  if (pair.num_classes() != 2) throw Error("bad-model", ErrorKind::data, "A/B scoring needs two classes");
  const auto s = pair.log_scores(trace);
  return s[1] - s[0];
}

/// Fraction of traces whose predicted class matches their index in `by_class`.
template <class Classifier>
double accuracy(const Classifier& clf, const std::vector<std::vector<Trace>>& by_class) {
  std::size_t hit = 0, total = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c)
    for (const auto& t : by_class[c]) {
      hit += clf.predict(t) == c;
      ++total;
    }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

/// counts[true][predicted]
template <class Classifier>
std::vector<std::vector<std::size_t>> confusion_matrix(const Classifier& clf,
                                                       const std::vector<std::vector<Trace>>& by_class) {
  std::vector<std::vector<std::size_t>> m(by_class.size(), std::vector<std::size_t>(clf.num_classes(), 0));
  for (std::size_t c = 0; c < by_class.size(); ++c)
    for (const auto& t : by_class[c]) ++m[c][clf.predict(t)];
  return m;
}

}  // namespace specleak::attacks
