#pragma once

#include <ostream>

namespace hicov {

/// Fast invariant checks (no Monte Carlo tables). Prints one line per check
/// and returns true when all pass.
bool run_selftest(std::ostream& out);

}  // namespace hicov
