#pragma once

#include <algorithm>
#include <string>
#include <variant>
#include <vector>

#include "specleak/attacks/convnet.hpp"
#include "specleak/attacks/gmm_classifier.hpp"
#include "specleak/common.hpp"
#include "specleak/wirechan/trace.hpp"

namespace specleak::attacks {

enum class Arch { gmm, convnet };

inline Arch parse_arch(std::string_view s) {
  if (s == "gmm") return Arch::gmm;
  if (s == "convnet") return Arch::convnet;
  throw Error("bad-config", ErrorKind::config, "unknown classifier arch '" + std::string(s) + "'");
}

/// Either fitted classifier behind one scoring interface.
class SignatureClassifier {
 public:
  SignatureClassifier() = default;
  SignatureClassifier(GmmClassifier g) : impl_(std::move(g)) {}
  SignatureClassifier(ConvNetClassifier c) : impl_(std::move(c)) {}

  Arch arch() const { return impl_.index() == 0 ? Arch::gmm : Arch::convnet; }
  std::size_t num_classes() const {
    return std::visit([](const auto& c) { return c.num_classes(); }, impl_);
  }
  std::vector<double> log_scores(const Trace& t) const {
    return std::visit([&](const auto& c) { return c.log_scores(t); }, impl_);
  }
  std::size_t predict(const Trace& t) const {
    return std::visit([&](const auto& c) { return c.predict(t); }, impl_);
  }
  const std::vector<std::string>& labels() const {
    return std::visit([](const auto& c) -> const std::vector<std::string>& { return c.labels; }, impl_);
  }

  const GmmClassifier* gmm() const { return std::get_if<GmmClassifier>(&impl_); }
  const ConvNetClassifier* convnet() const { return std::get_if<ConvNetClassifier>(&impl_); }

 private:
  std::variant<GmmClassifier, ConvNetClassifier> impl_;
};

struct MulticlassConfig {
  Arch arch = Arch::gmm;
  GmmConfig gmm;
  ConvNetConfig convnet;
};

inline SignatureClassifier fit_multiclass(const std::vector<std::vector<Trace>>& by_class, const MulticlassConfig& cfg,
                                          std::vector<std::string> labels = {}) {
  if (cfg.arch == Arch::gmm) return fit_gmm_classifier(by_class, cfg.gmm, std::move(labels));
  return fit_convnet(by_class, cfg.convnet, std::move(labels));
}

/// A victim conversation: every turn's response trace plus the true class.
struct Conversation {
  std::size_t label = 0;
  std::vector<Trace> turns;
};

/// Index of the largest entry; ties go to the lowest index.
inline std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Accuracy after 1..max_turns turns, deciding each conversation by the class
/// with the largest summed log-score over the turns seen so far.
template <class Classifier>
std::vector<double> multi_turn_accuracy(const Classifier& clf, const std::vector<Conversation>& conversations,
                                        std::size_t max_turns) {
  std::vector<double> acc(max_turns, 0.0);
  if (conversations.empty()) return acc;
  for (const auto& conv : conversations) {
    std::vector<double> total(clf.num_classes(), 0.0);
    for (std::size_t t = 0; t < max_turns; ++t) {
      if (t < conv.turns.size()) {
        const auto s = clf.log_scores(conv.turns[t]);
        for (std::size_t c = 0; c < total.size(); ++c) total[c] += s[c];
      }
      acc[t] += argmax(total) == conv.label;
    }
  }
  for (double& a : acc) a /= static_cast<double>(conversations.size());
  return acc;
}

}  // namespace specleak::attacks
