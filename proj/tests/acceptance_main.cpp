// Acceptance runner: executes every criterion, prints one line per result,
// exits nonzero if any fails. Also wired into ctest.

#include <iostream>

#include "cfedavg/acceptance.hpp"

int main() {
  try {
    auto results = cfedavg::run_acceptance_suite();
    const bool ok = cfedavg::print_acceptance_report(results, std::cout);
    return ok ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "acceptance suite aborted: " << e.what() << "\n";
    return 1;
  }
}
