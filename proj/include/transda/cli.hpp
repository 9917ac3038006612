#pragma once

#include <ostream>

namespace transda::cli {

// Entry point of the `transda` tool. Returns the process exit code:
// 0 success, 1 configuration error, 2 runtime failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace transda::cli
