// Distinguish "easy" from "hard" prompts by packet timing alone.
#include <cstdio>

#include "specleak/harness/studies.hpp"

int main() {
  using namespace specleak::harness;
  const auto world = shared_world(0);
  AbStudyConfig cfg;
  const auto r = ab_study(*world, cfg);
  std::printf("prompt classes   %s vs %s\n", cfg.workload_a.c_str(), cfg.workload_b.c_str());
  std::printf("test traces      %zu per class\n", r.test_a.size());
  std::printf("accuracy         %.3f (chance 0.5)\n", r.accuracy);
  std::printf("average precision %.3f\n", r.pr.auc);
  std::printf("recall @ p>=0.9  %.3f\n", r.pr.max_recall_at_precision(0.9));
}
