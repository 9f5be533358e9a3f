#pragma once

#include <string>
#include <vector>

namespace graphprobe::cli {

/// Parses `args` (without the program name), runs the subcommand and returns
/// the process exit code: 0 success, 1 usage or configuration error, 2 data
/// error, 3 numeric failure.
int dispatch(const std::vector<std::string>& args);

}  // namespace graphprobe::cli
