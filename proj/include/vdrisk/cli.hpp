#pragma once

namespace vdrisk::cli {

inline constexpr const char* kVersion = "1.0.0";

// Full command-line entry point. Exit codes: 0 success, 2 usage, 3 data
// validation, 4 numerical failure, 5 scorer protocol.
int run(int argc, char** argv);

}  // namespace vdrisk::cli
