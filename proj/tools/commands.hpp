#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace cref::cli {

// Runs one CLI invocation (args excludes the program name). Results go to
// `out`; failures produce a single JSON line on `err` and a nonzero status.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cref::cli
