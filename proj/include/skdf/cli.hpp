#pragma once

#include <string>
#include <vector>

namespace skdf {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitRuntime = 4;

/// Runs one skdf command (args exclude the program name). Exit status
/// separates config errors (2), data errors (3), and runtime aborts (4).
int run_cli(const std::vector<std::string>& args);

}  // namespace skdf
