#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace medbridge::cli {

// Exit-code contract, stable across all subcommands.
inline constexpr int kOk = 0;
inline constexpr int kOperationalError = 1;  // I/O, schema, backend failures
inline constexpr int kFindings = 2;          // validation/contradiction findings

// Entry point behind the `medbridge` binary. Streams are injectable so the
// test suite can run subcommands in-process.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace medbridge::cli
