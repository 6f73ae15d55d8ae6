#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "specleak/capture/signature.hpp"
#include "specleak/common.hpp"
#include "specleak/wirechan/trace.hpp"

namespace specleak::attacks {

using FeatureVector = std::vector<double>;

/// Which timing sequence feeds the classifier.
enum class TimingSource {
  packet_delays,  // raw inter-packet delays
  token_delays,   // inter-token delays after size declustering
};

struct FeatureSpec {
  std::size_t window = 50;
  double pad = 0.0;
  bool include_sizes = false;
  TimingSource source = TimingSource::packet_delays;
};

/// First `window` delays in seconds, truncated or padded with `pad`.
inline FeatureVector featurize(std::span<const std::int64_t> delays_ns, std::size_t window, double pad = 0.0) {
  FeatureVector out(window, pad);
  const std::size_t n = std::min(window, delays_ns.size());
  for (std::size_t i = 0; i < n; ++i) out[i] = to_seconds(delays_ns[i]);
  return out;
}

/// Delay window followed by a size window (kilobytes) of the same length.
inline FeatureVector featurize(std::span<const std::int64_t> delays_ns, std::span<const std::uint32_t> sizes,
                               std::size_t window, double pad = 0.0) {
  FeatureVector out = featurize(delays_ns, window, pad);
  out.resize(2 * window, pad);
  const std::size_t n = std::min(window, sizes.size());
  for (std::size_t i = 0; i < n; ++i) out[window + i] = static_cast<double>(sizes[i]) / 1000.0;
  return out;
}

inline FeatureVector featurize(const capture::TokenTimingSignature& sig, std::size_t window, double pad = 0.0) {
  return featurize(sig.inter_token_delays, window, pad);
}

/// Full trace-to-feature path. Token-delay features need a size model.
inline FeatureVector featurize(const Trace& trace, const FeatureSpec& spec,
                               const capture::SizeClusterModel* sizes = nullptr) {
  std::vector<std::int64_t> delays;
  if (spec.source == TimingSource::token_delays) {
    if (!sizes) throw Error("bad-config", ErrorKind::config, "token-delay features need a size model");
    delays = capture::reconstruct_token_delays(trace, *sizes).inter_token_delays;
  } else {
    delays = capture::ipd(trace);
  }
  if (!spec.include_sizes) return featurize(delays, spec.window, spec.pad);
  std::vector<std::uint32_t> sz;
  for (const auto& r : trace.records)
    if (r.dir == Direction::server_to_client) sz.push_back(r.size_bytes);
  // sizes align with the packet that ends each delay
  if (!sz.empty()) sz.erase(sz.begin());
  return featurize(delays, sz, spec.window, spec.pad);
}

/// Feature spec plus the size model it may need, applied uniformly to every trace.
struct Featurizer {
  FeatureSpec spec;
  std::optional<capture::SizeClusterModel> sizes;

  FeatureVector operator()(const Trace& trace) const { return featurize(trace, spec, sizes ? &*sizes : nullptr); }
  std::size_t dim() const { return spec.include_sizes ? 2 * spec.window : spec.window; }
};

/// Builds a featurizer, fitting the size model on `training` when token delays are requested.
/// `clusters` = 0 selects the cluster count by BIC up to `max_clusters`.
inline Featurizer make_featurizer(const FeatureSpec& spec, std::span<const Trace> training, std::size_t clusters = 0,
                                  std::size_t max_clusters = 8, const capture::SizeFitOptions& fit = {}) {
  Featurizer f{spec, std::nullopt};
  if (spec.source == TimingSource::token_delays) {
    const auto sizes = capture::server_sizes(training);
    f.sizes = clusters == 0 ? capture::select_size_clusters(sizes, max_clusters, fit)
                            : capture::fit_size_clusters(sizes, clusters, fit);
  }
  return f;
}

}  // namespace specleak::attacks
