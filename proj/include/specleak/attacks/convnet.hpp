#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "specleak/capture/signature.hpp"
#include "specleak/common.hpp"
#include "specleak/wirechan/trace.hpp"

namespace specleak::attacks {

struct ConvNetShape {
  std::size_t in_channels = 1;
  std::size_t length = 100;
  std::size_t c1 = 8, w1 = 5;
  std::size_t c2 = 16, w2 = 5;
  std::size_t classes = 2;

  std::size_t l1() const { return length - w1 + 1; }
  std::size_t l2() const { return l1() - w2 + 1; }

  // flat parameter layout: W1 b1 W2 b2 Wd bd
  std::size_t off_b1() const { return c1 * in_channels * w1; }
  std::size_t off_w2() const { return off_b1() + c1; }
  std::size_t off_b2() const { return off_w2() + c2 * c1 * w2; }
  std::size_t off_wd() const { return off_b2() + c2; }
  std::size_t off_bd() const { return off_wd() + classes * c2; }
  std::size_t num_params() const { return off_bd() + classes; }

  void validate() const {
    if (in_channels == 0 || classes == 0 || c1 == 0 || c2 == 0 || w1 == 0 || w2 == 0)
      throw Error("bad-config", ErrorKind::config, "convnet dimensions must be positive");
    if (length < w1 + w2 - 1) throw Error("bad-config", ErrorKind::config, "sequence shorter than receptive field");
  }
};

struct ConvNetTraining {
  double lr = 0.01;
  std::size_t epochs = 40;
  std::size_t batch = 32;
  std::uint64_t seed = 0;
  bool full_batch = false;  // plain gradient descent with backtracking instead of Adam minibatches
};

/// One input sequence: `in_channels x length`, row-major.
using Sequence = std::vector<double>;

/// conv -> relu -> conv -> relu -> global average pool -> dense -> logits.
class ConvNet {
 public:
  ConvNet() = default;
  explicit ConvNet(ConvNetShape shape) : shape_(shape) {
    shape_.validate();
    params_.assign(shape_.num_params(), 0.0);
  }

  const ConvNetShape& shape() const { return shape_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  void init(std::uint64_t seed) {
    Rng rng(seed);
    auto fill = [&](std::size_t from, std::size_t to, double fan_in) {
      const double a = std::sqrt(6.0 / fan_in);
      std::uniform_real_distribution<double> u(-a, a);
      for (std::size_t i = from; i < to; ++i) params_[i] = u(rng);
    };
    const auto& s = shape_;
    std::fill(params_.begin(), params_.end(), 0.0);
    fill(0, s.off_b1(), static_cast<double>(s.in_channels * s.w1));
    fill(s.off_w2(), s.off_b2(), static_cast<double>(s.c1 * s.w2));
    fill(s.off_wd(), s.off_bd(), static_cast<double>(s.c2));
  }

  std::vector<double> logits(std::span<const double> x) const {
    Activations a;
    forward(x, a);
    return a.out;
  }

  /// Softmax class probabilities.
  std::vector<double> probabilities(std::span<const double> x) const {
    auto o = logits(x);
    const double m = *std::max_element(o.begin(), o.end());
    double z = 0;
    for (double& v : o) z += (v = std::exp(v - m));
    for (double& v : o) v /= z;
    return o;
  }

  std::vector<double> log_probabilities(std::span<const double> x) const {
    auto o = logits(x);
    const double m = *std::max_element(o.begin(), o.end());
    double z = 0;
    for (double v : o) z += std::exp(v - m);
    const double lz = m + std::log(z);
    for (double& v : o) v -= lz;
    return o;
  }

  /// Mean cross-entropy over the batch; adds its gradient into `grad` when non-null.
  double loss(std::span<const Sequence> xs, std::span<const std::size_t> ys, std::vector<double>* grad) const {
    if (grad) grad->assign(params_.size(), 0.0);
    Activations a;
    double total = 0;
    const double inv_n = 1.0 / static_cast<double>(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      forward(xs[i], a);
      const double m = *std::max_element(a.out.begin(), a.out.end());
      double z = 0;
      for (double v : a.out) z += std::exp(v - m);
      const double lz = m + std::log(z);
      total += lz - a.out[ys[i]];
      if (grad) {
        std::vector<double> dout(a.out.size());
        for (std::size_t k = 0; k < dout.size(); ++k)
          dout[k] = (std::exp(a.out[k] - lz) - (k == ys[i] ? 1.0 : 0.0)) * inv_n;
        backward(xs[i], a, dout, *grad);
      }
    }
    return total * inv_n;
  }

 private:
  struct Activations {
    std::vector<double> z1, z2, pooled, out;
  };

  void forward(std::span<const double> x, Activations& a) const {
    const auto& s = shape_;
    if (x.size() != s.in_channels * s.length) throw Error("bad-data", ErrorKind::data, "input shape mismatch");
    const double* W1 = params_.data();
    const double* b1 = W1 + s.off_b1();
    const double* W2 = W1 + s.off_w2();
    const double* b2 = W1 + s.off_b2();
    const double* Wd = W1 + s.off_wd();
    const double* bd = W1 + s.off_bd();
    const std::size_t L1 = s.l1(), L2 = s.l2();

    a.z1.assign(s.c1 * L1, 0.0);
    for (std::size_t c = 0; c < s.c1; ++c)
      for (std::size_t t = 0; t < L1; ++t) {
        double acc = b1[c];
        for (std::size_t i = 0; i < s.in_channels; ++i) {
          const double* w = W1 + (c * s.in_channels + i) * s.w1;
          const double* xi = x.data() + i * s.length + t;
          for (std::size_t u = 0; u < s.w1; ++u) acc += w[u] * xi[u];
        }
        a.z1[c * L1 + t] = acc;
      }
    a.z2.assign(s.c2 * L2, 0.0);
    for (std::size_t d = 0; d < s.c2; ++d)
      for (std::size_t t = 0; t < L2; ++t) {
        double acc = b2[d];
        for (std::size_t c = 0; c < s.c1; ++c) {
          const double* w = W2 + (d * s.c1 + c) * s.w2;
          const double* h = a.z1.data() + c * L1 + t;
          for (std::size_t u = 0; u < s.w2; ++u) acc += w[u] * std::max(h[u], 0.0);
        }
        a.z2[d * L2 + t] = acc;
      }
    a.pooled.assign(s.c2, 0.0);
    for (std::size_t d = 0; d < s.c2; ++d) {
      double acc = 0;
      for (std::size_t t = 0; t < L2; ++t) acc += std::max(a.z2[d * L2 + t], 0.0);
      a.pooled[d] = acc / static_cast<double>(L2);
    }
    a.out.assign(s.classes, 0.0);
    for (std::size_t k = 0; k < s.classes; ++k) {
      double acc = bd[k];
      for (std::size_t d = 0; d < s.c2; ++d) acc += Wd[k * s.c2 + d] * a.pooled[d];
      a.out[k] = acc;
    }
  }

  void backward(std::span<const double> x, const Activations& a, std::span<const double> dout,
                std::vector<double>& g) const {
    const auto& s = shape_;
    const double* W2 = params_.data() + s.off_w2();
    const double* Wd = params_.data() + s.off_wd();
    double* gW1 = g.data();
    double* gb1 = g.data() + s.off_b1();
    double* gW2 = g.data() + s.off_w2();
    double* gb2 = g.data() + s.off_b2();
    double* gWd = g.data() + s.off_wd();
    double* gbd = g.data() + s.off_bd();
    const std::size_t L1 = s.l1(), L2 = s.l2();

    std::vector<double> dpool(s.c2, 0.0);
    for (std::size_t k = 0; k < s.classes; ++k) {
      gbd[k] += dout[k];
      for (std::size_t d = 0; d < s.c2; ++d) {
        gWd[k * s.c2 + d] += dout[k] * a.pooled[d];
        dpool[d] += Wd[k * s.c2 + d] * dout[k];
      }
    }
    std::vector<double> dz1(s.c1 * L1, 0.0);
    for (std::size_t d = 0; d < s.c2; ++d)
      for (std::size_t t = 0; t < L2; ++t) {
        if (a.z2[d * L2 + t] <= 0) continue;
        const double dz = dpool[d] / static_cast<double>(L2);
        gb2[d] += dz;
        for (std::size_t c = 0; c < s.c1; ++c) {
          const std::size_t wi = (d * s.c1 + c) * s.w2;
          for (std::size_t u = 0; u < s.w2; ++u) {
            const double h = a.z1[c * L1 + t + u];
            if (h > 0) {
              gW2[wi + u] += dz * h;
              dz1[c * L1 + t + u] += W2[wi + u] * dz;
            }
          }
        }
      }
    for (std::size_t c = 0; c < s.c1; ++c)
      for (std::size_t t = 0; t < L1; ++t) {
        const double dz = dz1[c * L1 + t];
        if (dz == 0) continue;
        gb1[c] += dz;
        for (std::size_t i = 0; i < s.in_channels; ++i) {
          const std::size_t wi = (c * s.in_channels + i) * s.w1;
          const double* xi = x.data() + i * s.length + t;
          for (std::size_t u = 0; u < s.w1; ++u) gW1[wi + u] += dz * xi[u];
        }
      }
  }

  ConvNetShape shape_;
  std::vector<double> params_;
};

struct TrainLog {
  std::vector<double> epoch_loss;  // full training-set loss after each epoch; entry 0 is before training
};

/// Trains in place. Minibatch mode uses Adam with a seeded shuffle; full-batch
/// mode halves the step until the loss does not increase.
inline TrainLog train(ConvNet& net, std::span<const Sequence> xs, std::span<const std::size_t> ys,
                      const ConvNetTraining& cfg) {
  if (xs.empty() || xs.size() != ys.size()) throw Error("bad-data", ErrorKind::data, "empty or mismatched training set");
  if (cfg.lr <= 0 || cfg.batch == 0) throw Error("bad-config", ErrorKind::config, "lr and batch must be positive");
  TrainLog log;
  log.epoch_loss.push_back(net.loss(xs, ys, nullptr));
  std::vector<double> grad;
  auto& p = net.params();

  if (cfg.full_batch) {
    double step = cfg.lr;
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
      const double cur = net.loss(xs, ys, &grad);
      const std::vector<double> saved = p;
      double next = cur;
      for (int tries = 0; tries < 40; ++tries) {
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = saved[i] - step * grad[i];
        next = net.loss(xs, ys, nullptr);
        if (next <= cur) break;
        step *= 0.5;
      }
      if (next > cur) {
        p = saved;
        next = cur;
      } else {
        step *= 1.5;
      }
      log.epoch_loss.push_back(next);
    }
    return log;
  }

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> m(p.size(), 0.0), v(p.size(), 0.0);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::size_t step = 0;
  std::vector<Sequence> bx;
  std::vector<std::size_t> by;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      bx.clear();
      by.clear();
      for (std::size_t i = start; i < end; ++i) {
        bx.push_back(xs[order[i]]);
        by.push_back(ys[order[i]]);
      }
      net.loss(bx, by, &grad);
      ++step;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = b1 * m[i] + (1 - b1) * grad[i];
        v[i] = b2 * v[i] + (1 - b2) * grad[i] * grad[i];
        p[i] -= cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
      }
    }
    log.epoch_loss.push_back(net.loss(xs, ys, nullptr));
  }
  return log;
}

/// Turns traces into standardized `channels x length` sequences: delays in
/// milliseconds, optionally followed by a packet-size channel.
struct SequenceEncoder {
  std::size_t length = 100;
  bool include_sizes = false;
  std::vector<double> mean, stdev;  // per channel

  std::size_t channels() const { return include_sizes ? 2 : 1; }

  Sequence raw(const Trace& t) const {
    Sequence x(channels() * length, 0.0);
    std::vector<std::int64_t> ts;
    std::vector<std::uint32_t> sz;
    for (const auto& r : t.records)
      if (r.dir == Direction::server_to_client) {
        ts.push_back(r.ts_ns);
        sz.push_back(r.size_bytes);
      }
    for (std::size_t j = 0; j + 1 < ts.size() && j < length; ++j) {
      x[j] = static_cast<double>(ts[j + 1] - ts[j]) / 1e6;
      if (include_sizes) x[length + j] = static_cast<double>(sz[j + 1]);
    }
    return x;
  }

  void fit(std::span<const Trace> traces) {
    const std::size_t C = channels();
    mean.assign(C, 0.0);
    stdev.assign(C, 0.0);
    std::size_t n = 0;
    std::vector<Sequence> xs;
    for (const auto& t : traces) xs.push_back(raw(t));
    for (const auto& x : xs)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t j = 0; j < length; ++j) mean[c] += x[c * length + j];
    n = xs.size() * length;
    for (double& m : mean) m /= static_cast<double>(n);
    for (const auto& x : xs)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t j = 0; j < length; ++j) {
          const double d = x[c * length + j] - mean[c];
          stdev[c] += d * d;
        }
    for (double& s : stdev) s = std::max(std::sqrt(s / static_cast<double>(n)), 1e-9);
  }

  Sequence operator()(const Trace& t) const {
    Sequence x = raw(t);
    for (std::size_t c = 0; c < channels(); ++c)
      for (std::size_t j = 0; j < length; ++j) x[c * length + j] = (x[c * length + j] - mean[c]) / stdev[c];
    return x;
  }
};

struct ConvNetConfig {
  std::size_t length = 100;
  bool include_sizes = false;
  std::size_t c1 = 8, w1 = 5, c2 = 16, w2 = 5;
  ConvNetTraining training;
};

struct ConvNetClassifier {
  SequenceEncoder encoder;
  ConvNet net;
  TrainLog log;
  std::vector<std::string> labels;

  std::size_t num_classes() const { return net.shape().classes; }
  std::vector<double> log_scores(const Trace& t) const { return net.log_probabilities(encoder(t)); }
  std::vector<double> probabilities(const Trace& t) const { return net.probabilities(encoder(t)); }
  std::size_t predict(const Trace& t) const {
    const auto s = log_scores(t);
    return static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
  }
};

inline ConvNetClassifier fit_convnet(const std::vector<std::vector<Trace>>& by_class, const ConvNetConfig& cfg,
                                     std::vector<std::string> labels = {}) {
  if (by_class.empty()) throw Error("empty-class", ErrorKind::data, "no classes");
  ConvNetClassifier clf;
  clf.encoder.length = cfg.length;
  clf.encoder.include_sizes = cfg.include_sizes;
  std::vector<Trace> all;
  std::vector<std::size_t> ys;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].empty()) throw Error("empty-class", ErrorKind::data, "a class has no traces");
    for (const auto& t : by_class[c]) {
      all.push_back(t);
      ys.push_back(c);
    }
  }
  clf.encoder.fit(all);
  std::vector<Sequence> xs;
  xs.reserve(all.size());
  for (const auto& t : all) xs.push_back(clf.encoder(t));
  ConvNetShape shape{clf.encoder.channels(), cfg.length, cfg.c1, cfg.w1, cfg.c2, cfg.w2, by_class.size()};
  clf.net = ConvNet(shape);
  clf.net.init(cfg.training.seed);
  clf.log = train(clf.net, xs, ys, cfg.training);
  if (labels.empty())
    for (std::size_t c = 0; c < by_class.size(); ++c) labels.push_back("class" + std::to_string(c));
  clf.labels = std::move(labels);
  return clf;
}

}  // namespace specleak::attacks
