#pragma once

#include <string>
#include <vector>

namespace cascade {

// Entry point behind the `cascade` binary; linked into the library so the
// command surface is testable in-process. Returns the process exit code:
// 0 success, 1 validation/format/analysis error, 2 fit non-convergence
// (results still written), 64 usage error.
int cli_dispatch(const std::vector<std::string>& args);
int cli_dispatch(int argc, const char* const* argv);

}  // namespace cascade
