#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace privkit::cli {

// Entry point shared by the binary and the tests. `args` excludes the
// program name. Returns 0 on success, 2 on configuration errors, 1 on
// runtime failures.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace privkit::cli
