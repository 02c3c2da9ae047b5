#pragma once

#include <iosfwd>

namespace fgan {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitPartial = 3;  // divergence or missing ablation cells

// Entry point of the `fusiongan` tool: train, ablate, analyze, gradcam,
// gendata, eval. Errors are reported on `err` as `error: <code>: <message>`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fgan
