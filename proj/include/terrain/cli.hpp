#ifndef TERRAIN_CLI_HPP
#define TERRAIN_CLI_HPP

#include <ostream>

namespace terrain::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

/// Entry point of the `terrain` binary; writes to `out`/`err` instead of the
/// process streams so that tests can capture them.
int run(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

} // namespace terrain::cli

#endif // TERRAIN_CLI_HPP
