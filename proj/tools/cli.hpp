// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace taskvec::cli {

/// Runs the `taskvec` command line. `args[0]` is the program name.
/// Exit codes: 0 success, 1 validation/configuration error, 2 I/O or format error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace taskvec::cli
