#include <iostream>

#include "doctest.h"
#include "invariants.hpp"

using namespace telehmm::testing;

TEST_CASE("invariant suite") {
  std::uint64_t seed = 20240601;
  for (const auto& inv : invariant_suite()) {
    SUBCASE((inv.module + ": " + inv.name).c_str()) {
      const InvariantReport r = inv.run(kInvariantCases, seed);
      INFO(inv.module << ": " << inv.name << " -- " << r.first_failure);
      CHECK(r.cases == kInvariantCases);
      CHECK(r.failures == 0);
      if (!r.note.empty()) std::cout << inv.module << ": " << inv.name << ": " << r.note << "\n";
    }
    ++seed;
  }
}
