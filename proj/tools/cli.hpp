#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace t2g::cli {

// Runs the t2g command line. Returns the process exit code: 0 on success,
// otherwise the ErrorKind value of the failure (usage errors map to 1).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace t2g::cli
