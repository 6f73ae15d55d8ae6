// Constant-rate padding: bandwidth and latency cost per interval, and what it
// leaves of the attack.
#include <cstdio>
#include <iostream>

#include "specleak/harness/studies.hpp"

int main() {
  using namespace specleak::harness;
  DefenseStudyConfig cfg;
  cfg.trials = 300;
  const auto r = defense_study(*shared_world(0), cfg);
  specleak::defense::write_csv(std::cout, r.tradeoff);
  std::printf("\n%-22s %10s %10s\n", "attack", "undefended", "paced");
  auto row = [](const char* name, const specleak::defense::DefenseEvaluation& e) {
    std::printf("%-22s %10.3f %10.3f\n", name, e.accuracy_undefended, e.accuracy_defended);
  };
  row("gmm (delays)", r.gmm);
  row("gmm (delays + sizes)", r.raw_gmm);
  row("convnet", r.convnet);
  std::printf("chance %.2f, +/- %.3f\n", r.gmm.chance, r.gmm.ci95);
}
