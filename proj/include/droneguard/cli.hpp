#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace droneguard::cli {

inline constexpr int kExitClean = 0;
inline constexpr int kExitAnomalies = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `droneguard` tool. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace droneguard::cli
