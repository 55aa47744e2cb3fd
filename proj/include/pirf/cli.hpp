#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pirf {

// Runs one CLI invocation. args holds the tokens after the program name.
// Returns the process exit code: 0 success, 1 runtime failure, 2 usage or
// configuration error. Normal output goes to out, diagnostics and progress
// lines to err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// main() adapter around run_cli with std::cout / std::cerr.
int cli_main(int argc, char** argv);

}  // namespace pirf
