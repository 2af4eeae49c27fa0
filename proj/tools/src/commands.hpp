#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace dcbilstm::cli {

/// Process exit statuses shared by every subcommand.
enum ExitCode : int {
    kExitOk = 0,
    kExitVerificationFailed = 1,
    kExitUsage = 2,
};

struct SweepRow {
    std::size_t dl;
    std::size_t dh;
    std::size_t th;
};

/// Rows of the t3 (fixed budget), t4 (growing dl) and t5 (growing dh)
/// hyperparameter grids. Throws ConfigError for an unknown table.
const std::vector<SweepRow>& sweep_table(const std::string& name);

/// Entry point of the `dcbilstm` tool. `args[0]` is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace dcbilstm::cli
