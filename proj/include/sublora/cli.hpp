#pragma once

#include <string>
#include <vector>

namespace sublora {

// Subcommand dispatcher. args excludes the program name. Exit codes:
// 0 success, 1 usage/validation error, 2 numerical or training error.
int dispatch(const std::vector<std::string>& args);

}  // namespace sublora
