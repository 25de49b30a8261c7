#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace scanpath3d::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Runs one command line (args[0] is the program name). Returns the process
/// exit code: 0 success, 2 usage or config error, 3 data error, 4 numeric failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace scanpath3d::cli
