#pragma once

#include <ostream>

namespace mate::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kDivergence = 3 };

/// Entry point for `mate <synth|train|rescore|sweep|eval> [flags]`.
int run_command(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mate::cli
