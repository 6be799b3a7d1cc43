#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mcam {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitStaging = 3;

// The mcam command line. Errors print one "error: <category>: <message>" line to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mcam
