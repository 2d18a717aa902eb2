#pragma once

#include <string>
#include <vector>

namespace declip::cli {

// Dispatches one subcommand: gen-data, train, evaluate, cluster, metrics or
// compare. Returns 0 on success, 1 on a runtime failure (single-line
// "error: ..." on stderr), 2 on a usage error.
int run(std::vector<std::string> args);

}  // namespace declip::cli
