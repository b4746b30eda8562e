#pragma once

#include <string>
#include <vector>

namespace dmpad::cli {

/// Exit codes: 0 success, 1 validation error, 2 runtime failure.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace dmpad::cli
