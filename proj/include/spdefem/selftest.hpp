#pragma once

#include <ostream>

namespace spdefem {

/// Fast known-answer and invariant checks. Prints one `PASS`/`FAIL` line
/// per check and returns true when all pass.
bool run_selftest(std::ostream& out);

}  // namespace spdefem
