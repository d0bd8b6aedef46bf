#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dfrot {

inline constexpr const char* kToolVersion = "0.1.0";

// Runs one CLI invocation; args excludes the program name. Returns the
// process exit status (0 ok, 2 usage, 3 data, 4 numerical, 5 invariance).
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int cli_dispatch(int argc, const char* const* argv);

}  // namespace dfrot
