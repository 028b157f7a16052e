#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace vaxmap::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitFailedConvergence = 3;
inline constexpr int kExitResource = 4;

// Runs the command line `args` (args[0] is the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vaxmap::cli
