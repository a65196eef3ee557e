#pragma once

#include <ostream>

namespace defect_forge {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNonConvergence = 3;

/// Entry point of the `defect_forge` command-line tool. Returns the process
/// exit code: 0 success, 2 validation/parse error, 3 fit non-convergence.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace defect_forge
