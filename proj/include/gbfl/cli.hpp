#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gbfl {

/// Runs the command line with `args` excluding the program name.
/// Returns 0 on success, 1 on a usage error and 2 on a runtime error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gbfl
