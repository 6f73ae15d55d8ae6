#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "specleak/common.hpp"

namespace specleak::stats {

inline double log_sum_exp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

/// Mixture of axis-aligned Gaussians. Means and variances are stored as
/// `components x dim` row-major blocks.
struct DiagGmm {
  std::size_t dim = 0;
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> vars;

  std::size_t components() const { return weights.size(); }
  std::span<const double> mean(std::size_t k) const { return {means.data() + k * dim, dim}; }
  std::span<const double> var(std::size_t k) const { return {vars.data() + k * dim, dim}; }

  /// log N(x; mean_k, diag(var_k)), without the mixture weight.
  double component_log_pdf(std::size_t k, std::span<const double> x) const {
    const double* mu = means.data() + k * dim;
    const double* v = vars.data() + k * dim;
    double acc = 0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = x[d] - mu[d];
      acc += std::log(2 * std::numbers::pi * v[d]) + diff * diff / v[d];
    }
    return -0.5 * acc;
  }

  double log_density(std::span<const double> x) const {
    double joint[64];
    std::vector<double> big;
    double* lj = joint;
    if (components() > 64) {
      big.resize(components());
      lj = big.data();
    }
    std::size_t n = 0;
    for (std::size_t k = 0; k < components(); ++k)
      if (weights[k] > 0) lj[n++] = std::log(weights[k]) + component_log_pdf(k, x);
    return log_sum_exp({lj, n});
  }
};

struct EmOptions {
  double tol = 1e-8;       // on mean per-sample log-likelihood
  int max_iter = 500;
  double var_floor = 0.25;
  double min_mass = 0.0;   // components with less responsibility keep their mean and variance
  std::vector<double> mean_lo, mean_hi;  // optional per-coordinate box on the means (components x dim)
};

struct EmResult {
  DiagGmm model;
  std::vector<double> loglik;  // mean per-sample log-likelihood, one entry per parameter state visited
  int iterations = 0;
  bool converged = false;
};

/// Runs EM from `init` on `n x dim` row-major data. Each iteration's
/// log-likelihood is checked to be non-decreasing; a drop beyond rounding
/// noise throws "em-not-monotone".
inline EmResult fit_em(std::span<const double> data, std::size_t dim, DiagGmm init, const EmOptions& opt = {}) {
  if (dim == 0 || data.size() % dim != 0 || data.empty())
    throw Error("bad-data", ErrorKind::data, "EM needs a non-empty n x dim matrix");
  const std::size_t n = data.size() / dim;
  const std::size_t K = init.components();
  EmResult res;
  res.model = std::move(init);
  DiagGmm& m = res.model;
  for (double& v : m.vars) v = std::max(v, opt.var_floor);

  std::vector<double> resp(n * K);
  std::vector<double> lj(K);

  auto e_step = [&]() {
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::span<const double> x = data.subspan(i * dim, dim);
      for (std::size_t k = 0; k < K; ++k)
        lj[k] = m.weights[k] > 0 ? std::log(m.weights[k]) + m.component_log_pdf(k, x)
                                 : -std::numeric_limits<double>::infinity();
      const double lse = log_sum_exp(lj);
      total += lse;
      for (std::size_t k = 0; k < K; ++k) resp[i * K + k] = m.weights[k] > 0 ? std::exp(lj[k] - lse) : 0.0;
    }
    return total / static_cast<double>(n);
  };

  auto m_step = [&]() {
    for (std::size_t k = 0; k < K; ++k) {
      double nk = 0;
      for (std::size_t i = 0; i < n; ++i) nk += resp[i * K + k];
      if (nk <= 1e-300) {
        m.weights[k] = 0.0;
        continue;
      }
      m.weights[k] = nk / static_cast<double>(n);
      if (nk < opt.min_mass) continue;
      double* mu = m.means.data() + k * dim;
      double* v = m.vars.data() + k * dim;
      std::fill(mu, mu + dim, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double r = resp[i * K + k];
        if (r == 0) continue;
        for (std::size_t d = 0; d < dim; ++d) mu[d] += r * data[i * dim + d];
      }
      for (std::size_t d = 0; d < dim; ++d) mu[d] /= nk;
      if (!opt.mean_lo.empty())
        for (std::size_t d = 0; d < dim; ++d) mu[d] = std::clamp(mu[d], opt.mean_lo[k * dim + d], opt.mean_hi[k * dim + d]);
      std::fill(v, v + dim, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double r = resp[i * K + k];
        if (r == 0) continue;
        for (std::size_t d = 0; d < dim; ++d) {
          const double diff = data[i * dim + d] - mu[d];
          v[d] += r * diff * diff;
        }
      }
      for (std::size_t d = 0; d < dim; ++d) v[d] = std::max(v[d] / nk, opt.var_floor);
    }
  };

  double ll = e_step();
  res.loglik.push_back(ll);
  for (int it = 0; it < opt.max_iter; ++it) {
    m_step();
    const double next = e_step();
    res.loglik.push_back(next);
    res.iterations = it + 1;
    if (next < ll - 1e-9 * (1.0 + std::abs(ll)))
      throw Error("em-not-monotone", ErrorKind::data,
                  "log-likelihood fell from " + std::to_string(ll) + " to " + std::to_string(next));
    const bool done = std::abs(next - ll) < opt.tol;
    ll = next;
    if (done) {
      res.converged = true;
      break;
    }
  }
  return res;
}

inline std::vector<double> column_variance(std::span<const double> data, std::size_t dim) {
  const std::size_t n = data.size() / dim;
  std::vector<double> mean(dim, 0.0), var(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < dim; ++d) mean[d] += data[i * dim + d];
  for (double& x : mean) x /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = data[i * dim + d] - mean[d];
      var[d] += diff * diff;
    }
  for (double& x : var) x /= static_cast<double>(n);
  return var;
}

/// 1-D initialization with means at the (i + 0.5) / k sample quantiles.
inline DiagGmm quantile_init(std::span<const double> values, std::size_t k) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  DiagGmm g;
  g.dim = 1;
  g.weights.assign(k, 1.0 / static_cast<double>(k));
  const double var = column_variance(values, 1)[0];
  for (std::size_t i = 0; i < k; ++i) {
    const double q = (static_cast<double>(i) + 0.5) / static_cast<double>(k);
    const auto idx = std::min(sorted.size() - 1, static_cast<std::size_t>(q * static_cast<double>(sorted.size())));
    g.means.push_back(sorted[idx]);
    g.vars.push_back(var / static_cast<double>(k * k) + 1e-12);
  }
  return g;
}

/// k-means++ style seeding: first center uniform, the rest proportional to
/// squared distance from the chosen set. Variances start at the column variance.
inline DiagGmm seeded_init(std::span<const double> data, std::size_t dim, std::size_t k, std::uint64_t seed) {
  const std::size_t n = data.size() / dim;
  Rng rng(seed);
  DiagGmm g;
  g.dim = dim;
  g.weights.assign(k, 1.0 / static_cast<double>(k));
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  for (std::size_t c = 0; c < k; ++c) {
    g.means.insert(g.means.end(), data.begin() + static_cast<std::ptrdiff_t>(pick * dim),
                   data.begin() + static_cast<std::ptrdiff_t>((pick + 1) * dim));
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = data[i * dim + d] - data[pick * dim + d];
        s += diff * diff;
      }
      d2[i] = std::min(d2[i], s);
      total += d2[i];
    }
    if (c + 1 == k) break;
    if (total <= 0) {
      pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
      continue;
    }
    double u = std::uniform_real_distribution<double>(0.0, total)(rng);
    pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      u -= d2[i];
      if (u <= 0) {
        pick = i;
        break;
      }
    }
  }
  const auto var = column_variance(data, dim);
  for (std::size_t c = 0; c < k; ++c) g.vars.insert(g.vars.end(), var.begin(), var.end());
  return g;
}

}  // namespace specleak::stats
