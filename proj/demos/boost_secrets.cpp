// Identify which of N secrets a victim's system prompt holds by combining
// timing from several attacker-chosen suffixes.
#include <cstdio>

#include "specleak/harness/studies.hpp"

int main() {
  using namespace specleak::harness;
  BoostStudyConfig cfg;
  cfg.secrets = 20;
  cfg.suffixes = 10;
  cfg.victims = 100;
  const auto r = boost_study(cfg);
  std::printf("candidates        %zu (chance %.3f)\n", cfg.secrets, 1.0 / static_cast<double>(cfg.secrets));
  std::printf("best one suffix   %.3f\n", r.best_single_suffix);
  std::printf("all %2zu suffixes  %.3f\n", cfg.suffixes, r.recovery);
  std::printf("victim queries    %zu\n", r.queries);
}
