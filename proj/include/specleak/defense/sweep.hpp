#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "specleak/common.hpp"
#include "specleak/defense/pace.hpp"
#include "specleak/specsim/speculative.hpp"
#include "specleak/wirechan/channel.hpp"

namespace specleak::defense {

struct TradeoffPoint {
  double interval_ms = 0;
  double overhead_pct = 0;
  double latency_ms_mean = 0;
  double latency_ms_p90 = 0;
  double real_fraction = 0;
};

struct TradeoffCurve {
  std::vector<TradeoffPoint> points;  // ascending interval
  bool overhead_monotone = true;      // non-increasing in interval
  bool latency_monotone = true;       // non-decreasing in interval
};

/// Paces every generation at each interval and reports the aggregate cost.
inline TradeoffCurve tradeoff_sweep(const std::vector<std::vector<specsim::GenEvent>>& workload,
                                    std::vector<double> intervals_ms, const wirechan::FrameSpec& spec,
                                    const DefensePolicy& base = {}) {
  std::sort(intervals_ms.begin(), intervals_ms.end());
  TradeoffCurve curve;
  for (double ms : intervals_ms) {
    DefensePolicy p = base;
    p.interval = millis(ms);
    std::vector<PacedStream> streams;
    streams.reserve(workload.size());
    for (const auto& g : workload) streams.push_back(pace(g, p, spec));
    const auto r = combine(streams);
    curve.points.push_back({ms, 100.0 * r.bandwidth_overhead, r.added_latency.mean_ms, r.added_latency.p90_ms,
                            r.real_data_fraction});
  }
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    if (curve.points[i].overhead_pct > curve.points[i - 1].overhead_pct) curve.overhead_monotone = false;
    if (curve.points[i].latency_ms_mean < curve.points[i - 1].latency_ms_mean) curve.latency_monotone = false;
  }
  return curve;
}

inline void write_csv(std::ostream& os, const TradeoffCurve& c) {
  os << "interval_ms,overhead_pct,latency_ms_mean,latency_ms_p90,real_fraction\n";
  for (const auto& p : c.points)
    os << p.interval_ms << ',' << p.overhead_pct << ',' << p.latency_ms_mean << ',' << p.latency_ms_p90 << ','
       << p.real_fraction << '\n';
}

/// Latency (x) against bandwidth overhead (y), one labelled marker per interval.
inline std::string tradeoff_svg(const TradeoffCurve& c) {
  const double W = 480, H = 320, L = 60, B = 40, R = 20, T = 20;
  double xmax = 1, ymax = 1;
  for (const auto& p : c.points) {
    xmax = std::max(xmax, p.latency_ms_mean);
    ymax = std::max(ymax, p.overhead_pct);
  }
  auto X = [&](double v) { return L + (W - L - R) * v / (xmax * 1.05); };
  auto Y = [&](double v) { return H - B - (H - B - T) * v / (ymax * 1.05); };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"" << H - 8 << "\" text-anchor=\"middle\" font-size=\"12\">"
    << "added latency per token (ms)</text>\n";
  s << "<text x=\"14\" y=\"" << H / 2 << "\" font-size=\"12\" transform=\"rotate(-90 14 " << H / 2
    << ")\" text-anchor=\"middle\">bandwidth overhead (%)</text>\n";
  s << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  for (const auto& p : c.points) s << X(p.latency_ms_mean) << ',' << Y(p.overhead_pct) << ' ';
  s << "\"/>\n";
  for (const auto& p : c.points) {
    s << "<circle cx=\"" << X(p.latency_ms_mean) << "\" cy=\"" << Y(p.overhead_pct) << "\" r=\"3\"/>\n";
    s << "<text x=\"" << X(p.latency_ms_mean) + 5 << "\" y=\"" << Y(p.overhead_pct) - 5 << "\" font-size=\"10\">"
      << p.interval_ms << " ms</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

/// One generation to be turned into a trace, with its class.
struct LabelledGeneration {
  std::vector<specsim::GenEvent> events;
  std::size_t label = 0;
  std::uint64_t net_seed = 0;
};

struct DefenseEvaluation {
  double accuracy_undefended = 0;
  double accuracy_defended = 0;
  double chance = 0;
  double ci95 = 0;  // normal-approximation half-width of the defended accuracy
  std::size_t trials = 0;
  OverheadReport overhead;
};

/// Trace of one generation as seen on the wire, paced or not.
inline Trace wire_trace(const LabelledGeneration& g, const wirechan::FrameSpec& spec, const wirechan::NetModel& net,
                        const DefensePolicy* policy, const std::string& stream_id = "s0",
                        PacedStream* paced_out = nullptr) {
  std::vector<wirechan::WirePacket> pkts;
  pkts.push_back(wirechan::request_packet(spec.header_bytes + 200, 0, stream_id));
  if (policy) {
    auto paced = pace(g.events, *policy, spec, stream_id);
    pkts.insert(pkts.end(), paced.packets.begin(), paced.packets.end());
    if (paced_out) *paced_out = std::move(paced);
  } else {
    auto framed = wirechan::frame(g.events, spec, stream_id);
    pkts.insert(pkts.end(), framed.begin(), framed.end());
  }
  wirechan::NetModel n = net;
  n.seed = g.net_seed;
  return wirechan::observe(wirechan::transmit(std::move(pkts), n));
}

/// Fits the attack twice, once on plain traces and once on paced traces, and
/// scores each on held-out generations handled the same way.
template <class Fit>
DefenseEvaluation evaluate_defense(Fit&& fit, const std::vector<LabelledGeneration>& train,
                                   const std::vector<LabelledGeneration>& test, const DefensePolicy& policy,
                                   const wirechan::FrameSpec& spec, const wirechan::NetModel& net) {
  std::size_t classes = 0;
  for (const auto& g : train) classes = std::max(classes, g.label + 1);
  DefenseEvaluation ev;
  ev.trials = test.size();
  ev.chance = classes ? 1.0 / static_cast<double>(classes) : 0.0;
  std::vector<PacedStream> paced;
  for (int defended = 0; defended < 2; ++defended) {
    const DefensePolicy* p = defended ? &policy : nullptr;
    std::vector<std::vector<Trace>> by_class(classes);
    for (const auto& g : train) by_class[g.label].push_back(wire_trace(g, spec, net, p));
    const auto clf = fit(by_class);
    std::size_t hit = 0;
    for (const auto& g : test) {
      PacedStream ps;
      const Trace t = wire_trace(g, spec, net, p, "s0", defended ? &ps : nullptr);
      if (defended) paced.push_back(std::move(ps));
      hit += clf.predict(t) == g.label;
    }
    const double acc = test.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(test.size());
    (defended ? ev.accuracy_defended : ev.accuracy_undefended) = acc;
  }
  if (!test.empty())
    ev.ci95 = 1.96 * std::sqrt(ev.accuracy_defended * (1 - ev.accuracy_defended) / static_cast<double>(test.size()));
  ev.overhead = combine(paced);
  return ev;
}

}  // namespace specleak::defense
