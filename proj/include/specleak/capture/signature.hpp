#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "specleak/common.hpp"
#include "specleak/stats/gmm.hpp"
#include "specleak/wirechan/trace.hpp"

namespace specleak::capture {

/// Inter-packet delays of the server-to-client records, in nanoseconds.
inline std::vector<std::int64_t> ipd(const Trace& trace) {
  std::vector<std::int64_t> ts;
  for (const auto& r : trace.records)
    if (r.dir == Direction::server_to_client) ts.push_back(r.ts_ns);
  if (ts.size() < 2) throw Error("trace-too-short", ErrorKind::data, trace.stream_id);
  std::vector<std::int64_t> out(ts.size() - 1);
  for (std::size_t j = 0; j + 1 < ts.size(); ++j) out[j] = ts[j + 1] - ts[j];
  return out;
}

/// Packet-size model: cluster i (1-based) holds packets carrying i tokens.
struct SizeClusterModel {
  std::vector<double> mu;
  std::vector<double> sigma;
  std::vector<double> weight;
  std::size_t fitted_on = 0;
  bool chosen_by_bic = false;

  std::size_t max_tokens() const { return mu.size(); }
};

enum class SizeInit {
  quantile,  // means at evenly spaced sample quantiles
  lattice,   // means at min size + (i - 1) * lattice_unit, each kept within half a unit of its start
};

struct SizeFitOptions {
  double tol = 1e-8;
  int max_iter = 500;
  double sigma_floor = 0.5;
  SizeInit init = SizeInit::quantile;
  double lattice_unit = 0;  // bytes per extra token, for lattice init
};

inline std::vector<double> server_sizes(std::span<const Trace> traces) {
  std::vector<double> sizes;
  for (const auto& t : traces)
    for (const auto& r : t.records)
      if (r.dir == Direction::server_to_client) sizes.push_back(static_cast<double>(r.size_bytes));
  return sizes;
}

/// 1-D EM over packet sizes with `clusters` components, means ascending.
inline SizeClusterModel fit_size_clusters(std::span<const double> sizes, std::size_t clusters,
                                          const SizeFitOptions& opt = {}) {
  if (clusters == 0) throw Error("bad-config", ErrorKind::config, "need at least one cluster");
  if (sizes.empty()) throw Error("no-data", ErrorKind::data, "no server packets to fit");
  SizeClusterModel m;
  m.fitted_on = sizes.size();
  if (clusters == 1) {
    double sum = 0;
    for (double s : sizes) sum += s;
    const double mean = sum / static_cast<double>(sizes.size());
    double var = 0;
    for (double s : sizes) var += (s - mean) * (s - mean);
    var /= static_cast<double>(sizes.size());
    m.mu = {mean};
    m.sigma = {std::max(std::sqrt(var), opt.sigma_floor)};
    m.weight = {1.0};
    return m;
  }
  if (opt.init == SizeInit::lattice) {
    if (opt.lattice_unit <= 0) throw Error("bad-config", ErrorKind::config, "lattice init needs a positive unit");
    // lattice phase from the circular mean of size mod unit
    const double unit = opt.lattice_unit, two_pi = 2.0 * std::acos(-1.0);
    double c = 0, s = 0;
    for (double v : sizes) {
      c += std::cos(two_pi * v / unit);
      s += std::sin(two_pi * v / unit);
    }
    const double phase = std::atan2(s, c) / two_pi * unit;
    const double lo = *std::min_element(sizes.begin(), sizes.end()) - 0.5 * unit;
    const double first = phase + unit * std::ceil((lo - phase) / unit);

    auto fit_from = [&](double base) {
      stats::DiagGmm init;
      init.dim = 1;
      init.weights.assign(clusters, 1.0 / static_cast<double>(clusters));
      stats::EmOptions em;
      em.tol = opt.tol;
      em.max_iter = opt.max_iter;
      em.var_floor = opt.sigma_floor * opt.sigma_floor;
      em.min_mass = 0.5;
      for (std::size_t i = 0; i < clusters; ++i) {
        const double mu = base + static_cast<double>(i) * unit;
        init.means.push_back(mu);
        init.vars.push_back(unit * unit / 36.0);
        em.mean_lo.push_back(mu - 0.5 * unit);
        em.mean_hi.push_back(mu + 0.5 * unit);
      }
      return stats::fit_em(sizes, 1, std::move(init), em);
    };
    // an outlying minimum can put the first lattice point one step low
    auto fit = fit_from(first);
    auto shifted = fit_from(first + unit);
    if (shifted.loglik.back() > fit.loglik.back()) fit = std::move(shifted);
    for (std::size_t i = 0; i < clusters; ++i) {
      m.mu.push_back(fit.model.means[i]);
      m.sigma.push_back(std::sqrt(fit.model.vars[i]));
      m.weight.push_back(fit.model.weights[i]);
    }
    for (std::size_t i = 1; i < m.mu.size(); ++i)
      if (!(m.mu[i] > m.mu[i - 1])) throw Error("degenerate-clusters", ErrorKind::data, "cluster means collided");
    return m;
  }

  std::vector<double> distinct(sizes.begin(), sizes.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < clusters)
    throw Error("degenerate-clusters", ErrorKind::data,
                std::to_string(distinct.size()) + " distinct sizes for " + std::to_string(clusters) + " clusters");

  stats::EmOptions em;
  em.tol = opt.tol;
  em.max_iter = opt.max_iter;
  em.var_floor = opt.sigma_floor * opt.sigma_floor;
  auto fit = stats::fit_em(sizes, 1, stats::quantile_init(sizes, clusters), em);
  std::vector<std::size_t> order(clusters);
  for (std::size_t i = 0; i < clusters; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return fit.model.means[a] < fit.model.means[b]; });
  for (auto k : order) {
    if (fit.model.weights[k] <= 0) continue;
    m.mu.push_back(fit.model.means[k]);
    m.sigma.push_back(std::sqrt(fit.model.vars[k]));
    m.weight.push_back(fit.model.weights[k]);
  }
  for (std::size_t i = 1; i < m.mu.size(); ++i)
    if (!(m.mu[i] > m.mu[i - 1])) throw Error("degenerate-clusters", ErrorKind::data, "cluster means collided");
  if (m.mu.size() != clusters) throw Error("degenerate-clusters", ErrorKind::data, "empty cluster after EM");
  return m;
}

inline SizeClusterModel fit_size_clusters(std::span<const Trace> traces, std::size_t clusters,
                                          const SizeFitOptions& opt = {}) {
  return fit_size_clusters(server_sizes(traces), clusters, opt);
}

/// Picks the cluster count in [1, max_clusters] with the lowest BIC.
inline SizeClusterModel select_size_clusters(std::span<const double> sizes, std::size_t max_clusters,
                                             const SizeFitOptions& opt = {}) {
  SizeClusterModel best;
  double best_bic = std::numeric_limits<double>::infinity();
  const double n = static_cast<double>(sizes.size());
  for (std::size_t b = 1; b <= max_clusters; ++b) {
    SizeClusterModel m;
    try {
      m = fit_size_clusters(sizes, b, opt);
    } catch (const Error& e) {
      if (e.code() == "degenerate-clusters") break;
      throw;
    }
    double ll = 0;
    for (double s : sizes) {
      double acc = 0;
      for (std::size_t i = 0; i < m.mu.size(); ++i) {
        const double z = (s - m.mu[i]) / m.sigma[i];
        acc += m.weight[i] * std::exp(-0.5 * z * z) / (m.sigma[i] * std::sqrt(2 * std::numbers::pi));
      }
      ll += std::log(std::max(acc, 1e-300));
    }
    const double params = 3.0 * static_cast<double>(b) - 1.0;
    const double bic = params * std::log(n) - 2.0 * ll;
    if (bic < best_bic) {
      best_bic = bic;
      best = std::move(m);
    }
  }
  best.chosen_by_bic = true;
  return best;
}

/// argmax_i N(s; mu_i, sigma_i^2), returned 1-based; ties go to the smaller i.
inline std::size_t tokens_in_packet(double size, const SizeClusterModel& model) {
  if (model.mu.empty()) throw Error("bad-model", ErrorKind::data, "empty size model");
  std::size_t best = 0;
  double best_lp = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < model.mu.size(); ++i) {
    const double z = (size - model.mu[i]) / model.sigma[i];
    const double lp = -0.5 * z * z - std::log(model.sigma[i]);
    if (lp > best_lp) {
      best_lp = lp;
      best = i;
    }
  }
  return best + 1;
}

struct TokenTimingSignature {
  std::vector<std::int64_t> inter_token_delays;  // ns, length = total tokens - 1
  std::vector<std::size_t> token_counts_per_packet;

  std::size_t total_tokens() const {
    std::size_t n = 0;
    for (auto c : token_counts_per_packet) n += c;
    return n;
  }
};

enum class IntraPacketDelay {
  zero,     // tokens sharing a packet are 0 apart
  uniform,  // the preceding gap is spread evenly over the packet's tokens
};

/// Expands each packet into its declustered token count and rebuilds the
/// inter-token delay sequence.
inline TokenTimingSignature reconstruct_token_delays(const Trace& trace, const SizeClusterModel& model,
                                                     IntraPacketDelay mode = IntraPacketDelay::zero) {
  TokenTimingSignature sig;
  std::int64_t prev_ts = 0;
  bool first = true;
  for (const auto& r : trace.records) {
    if (r.dir != Direction::server_to_client) continue;
    const std::size_t c = tokens_in_packet(static_cast<double>(r.size_bytes), model);
    sig.token_counts_per_packet.push_back(c);
    if (first) {
      for (std::size_t i = 1; i < c; ++i) sig.inter_token_delays.push_back(0);
      first = false;
    } else {
      const std::int64_t gap = r.ts_ns - prev_ts;
      if (mode == IntraPacketDelay::zero) {
        sig.inter_token_delays.push_back(gap);
        for (std::size_t i = 1; i < c; ++i) sig.inter_token_delays.push_back(0);
      } else {
        const auto n = static_cast<std::int64_t>(c);
        for (std::int64_t i = 0; i < n; ++i) sig.inter_token_delays.push_back(gap / n + (i < gap % n ? 1 : 0));
      }
    }
    prev_ts = r.ts_ns;
  }
  return sig;
}

}  // namespace specleak::capture
