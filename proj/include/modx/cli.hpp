#pragma once

#include <ostream>

namespace modx {

/// Entry point behind the `modx` binary. Subcommands: generate, train,
/// analyze, sweep, demo-rotation, report.
/// Returns 0 on success, 2 on usage or config errors, 1 on runtime failures.
int parse_and_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace modx
