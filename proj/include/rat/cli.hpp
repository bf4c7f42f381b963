#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace rat {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs one ratctl invocation. `args` excludes the program name. Usage
/// errors are detected before any file is read or written.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rat
