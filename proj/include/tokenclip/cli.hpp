#pragma once

#include <string>
#include <vector>

namespace tokenclip {

// Entry point shared by the binary and the tests. args excludes argv[0].
int run_cli(const std::vector<std::string>& args);

}  // namespace tokenclip
