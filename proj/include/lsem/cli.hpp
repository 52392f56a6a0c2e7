#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lsem::cli {

/// Exit codes: 0 success, 1 usage error, 2 data or model error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Subcommands: train, predict, evaluate, corr, sigtest, gradcheck, synth.
/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace lsem::cli
