#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace patchbank::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitInvariant = 4;

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Convenience for tests: args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace patchbank::cli
