#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace telehmm {

/// Exit codes: 0 success, 1 error, 2 a requested fit did not converge.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Same, with `args` excluding the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace telehmm
