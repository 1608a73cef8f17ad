#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace iclsel {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitBackend = 2;

inline constexpr const char* kVersion = "0.1.0";

/// Entry point behind the `iclsel` binary. `args` excludes the program name.
/// Subcommands: centroids, synthesize, select, prompt, infer, evaluate,
/// sweep, report, validate.
///
/// Values resolve as: command-line flag, then ICLSEL_<NAME> environment
/// variable, then the --config JSON file, then the built-in default.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace iclsel
