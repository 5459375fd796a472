#pragma once

// Experiment driver behind the `mfcpn` executable.
//
// Exit codes: 0 success or passing check, 1 failing check, 2 usage or
// configuration error.

#include <iosfwd>
#include <string>
#include <vector>

namespace mfcpn {

/// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mfcpn
