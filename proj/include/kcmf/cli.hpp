#pragma once

#include <iosfwd>

namespace kcmf::cli {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kConfigError = 2,
    kBackendError = 3,
    kDataError = 4,
};

/// Parses the command line, runs the subcommand and maps errors to exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace kcmf::cli
