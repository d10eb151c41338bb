#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace streamgemm::cli {

// Exit codes: 0 success, 1 runtime error, 2 usage or file error.
constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace streamgemm::cli
