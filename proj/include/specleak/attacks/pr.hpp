#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <vector>

#include "specleak/common.hpp"

namespace specleak::attacks {

struct PrPoint {
  double threshold = 0;  // predict positive when score >= threshold
  double precision = 1;
  double recall = 0;
};

struct PrCurve {
  std::vector<PrPoint> points;  // thresholds descending, recall non-decreasing
  double auc = 0;               // average precision

  double max_recall_at_precision(double p) const {
    double best = 0;
    for (const auto& pt : points)
      if (pt.precision >= p) best = std::max(best, pt.recall);
    return best;
  }
};

/// Sweeps the decision threshold over every distinct score. Ties are
/// admitted together, so every point is achievable by some threshold.
inline PrCurve pr_sweep(std::span<const double> scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw Error("bad-data", ErrorKind::data, "scores and labels differ in length");
  const std::size_t positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  if (scores.empty() || positives == 0) throw Error("bad-data", ErrorKind::data, "need at least one positive");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });

  PrCurve curve;
  std::size_t tp = 0, fp = 0;
  double prev_recall = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double tau = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == tau; ++i) (labels[order[i]] ? tp : fp)++;
    PrPoint pt{tau, static_cast<double>(tp) / static_cast<double>(tp + fp),
               static_cast<double>(tp) / static_cast<double>(positives)};
    curve.auc += (pt.recall - prev_recall) * pt.precision;
    prev_recall = pt.recall;
    curve.points.push_back(pt);
  }
  return curve;
}

}  // namespace specleak::attacks
