#pragma once

#include <iosfwd>

namespace calav {

enum ExitCode : int { kExitOk = 0, kExitInput = 2, kExitConsistency = 3, kExitNumeric = 4 };

/// Entry point of the calav tool: prep, sample, train, eval, report, synth.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace calav
