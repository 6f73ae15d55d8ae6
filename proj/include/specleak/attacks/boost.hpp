#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "specleak/attacks/features.hpp"
#include "specleak/common.hpp"
#include "specleak/wirechan/trace.hpp"

namespace specleak::attacks {

/// Gaussian class-conditional model with a shared diagonal variance: one mean
/// per class, one pooled variance vector.
struct TiedGaussian {
  std::size_t dim = 0;
  std::vector<std::vector<double>> means;
  std::vector<double> var;

  std::size_t num_classes() const { return means.size(); }

  std::vector<double> log_scores(std::span<const double> x) const {
    std::vector<double> out(means.size());
    for (std::size_t c = 0; c < means.size(); ++c) {
      double acc = 0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = x[d] - means[c][d];
        acc += diff * diff / var[d];
      }
      out[c] = -0.5 * acc;
    }
    return out;
  }
};

inline TiedGaussian fit_tied_gaussian(const std::vector<std::vector<FeatureVector>>& by_class, double var_floor) {
  TiedGaussian m;
  if (by_class.empty() || by_class.front().empty()) throw Error("empty-class", ErrorKind::data, "no samples");
  m.dim = by_class.front().front().size();
  m.var.assign(m.dim, 0.0);
  std::size_t n = 0;
  for (const auto& cls : by_class) {
    if (cls.empty()) throw Error("empty-class", ErrorKind::data, "a class has no samples");
    std::vector<double> mu(m.dim, 0.0);
    for (const auto& x : cls)
      for (std::size_t d = 0; d < m.dim; ++d) mu[d] += x[d];
    for (double& v : mu) v /= static_cast<double>(cls.size());
    for (const auto& x : cls)
      for (std::size_t d = 0; d < m.dim; ++d) m.var[d] += (x[d] - mu[d]) * (x[d] - mu[d]);
    n += cls.size();
    m.means.push_back(std::move(mu));
  }
  for (double& v : m.var) v = std::max(v / static_cast<double>(n), var_floor);
  return m;
}

/// Produces the trace of candidate prompt `prompt` followed by suffix `suffix`;
/// `rep` distinguishes repeated queries.
using LabelledQuery = std::function<Trace(std::size_t prompt, std::size_t suffix, std::uint64_t rep)>;
/// The victim: answers the unknown prompt followed by suffix `suffix`.
using VictimQuery = std::function<Trace(std::size_t suffix)>;

struct BoostConfig {
  FeatureSpec features;
  std::size_t train_reps = 3;
  double var_floor = 1e-8;
};

/// One classifier per suffix over the shared candidate set; inference sums
/// class log-scores across suffixes.
struct BoostEnsemble {
  Featurizer featurizer;
  std::vector<TiedGaussian> per_suffix;

  std::size_t num_classes() const { return per_suffix.empty() ? 0 : per_suffix.front().num_classes(); }
  std::size_t num_suffixes() const { return per_suffix.size(); }

  std::vector<double> suffix_scores(std::size_t j, const Trace& t) const {
    return per_suffix.at(j).log_scores(featurizer(t));
  }
  std::size_t predict_single(std::size_t j, const Trace& t) const {
    const auto s = suffix_scores(j, t);
    return static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
  }
};

inline BoostEnsemble boost_fit(std::size_t n_prompts, std::size_t n_suffixes, const LabelledQuery& query,
                               const BoostConfig& cfg = {}) {
  if (n_prompts == 0 || n_suffixes == 0)
    throw Error("bad-config", ErrorKind::config, "need at least one prompt and one suffix");
  if (cfg.train_reps == 0) throw Error("bad-config", ErrorKind::config, "train_reps must be >= 1");
  if (cfg.features.source == TimingSource::token_delays)
    throw Error("bad-config", ErrorKind::config, "boosting uses packet delays");
  BoostEnsemble e;
  e.featurizer.spec = cfg.features;
  for (std::size_t j = 0; j < n_suffixes; ++j) {
    std::vector<std::vector<FeatureVector>> by_class(n_prompts);
    for (std::size_t i = 0; i < n_prompts; ++i)
      for (std::size_t r = 0; r < cfg.train_reps; ++r) by_class[i].push_back(e.featurizer(query(i, j, r)));
    e.per_suffix.push_back(fit_tied_gaussian(by_class, cfg.var_floor));
  }
  return e;
}

/// Summed log-scores for each candidate after one victim query per suffix.
inline std::vector<double> boost_scores(const BoostEnsemble& e, const VictimQuery& victim) {
  std::vector<double> total(e.num_classes(), 0.0);
  for (std::size_t j = 0; j < e.num_suffixes(); ++j) {
    const auto s = e.suffix_scores(j, victim(j));
    for (std::size_t c = 0; c < total.size(); ++c) total[c] += s[c];
  }
  return total;
}

/// Predicted candidate index; ties go to the lowest index.
inline std::size_t boost_infer(const BoostEnsemble& e, const VictimQuery& victim) {
  const auto total = boost_scores(e, victim);
  return static_cast<std::size_t>(std::max_element(total.begin(), total.end()) - total.begin());
}

}  // namespace specleak::attacks
