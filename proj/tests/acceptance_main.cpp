// Runs the acceptance criteria and prints one verdict line per criterion.
// Usage: acceptance [--criterion N]... [--seed S]

#include <cstdio>
#include <cstdlib>
#include <cstring>

#include "qtrack/acceptance.hpp"

int main(int argc, char** argv) {
  qtrack::AcceptanceConfig cfg;
  for (int i = 1; i < argc; ++i) {
    if (!std::strcmp(argv[i], "--criterion") && i + 1 < argc) {
      cfg.only.push_back(std::atoi(argv[++i]));
    } else if (!std::strcmp(argv[i], "--seed") && i + 1 < argc) {
      cfg.seed = std::strtoull(argv[++i], nullptr, 10);
    } else {
      std::fprintf(stderr, "usage: %s [--criterion N]... [--seed S]\n", argv[0]);
      return 2;
    }
  }
  bool all = true;
  for (const auto& r : qtrack::run_acceptance(cfg)) {
    all = all && r.pass;
    std::printf("criterion %2d [%s] %s: %s (%.1f s)\n", r.id, r.pass ? "PASS" : "FAIL",
                r.name.c_str(), r.detail.c_str(), r.seconds);
  }
  return all ? 0 : 1;
}
