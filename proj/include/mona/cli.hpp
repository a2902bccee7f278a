#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mona {

// Subcommands: run, converge, demo-rectifier, check. args[0] is the program
// name. Exit codes: 0 success, 1 parse/validation failure, 2 solver failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mona
