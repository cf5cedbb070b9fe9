#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace apg::cli {

/// Exit codes shared by all subcommands.
enum ExitCode : int {
  kOk = 0,
  kAttackFailed = 1,  // attack: no evasion; fetch-data: download/verify failure
  kUsage = 2,         // bad flags, missing data/model, port busy
  kDiverged = 3,      // train: loss went non-finite
};

/// Runs one subcommand (train | attack | bench | serve | fetch-data).
/// `args` excludes the program name. Machine output goes to `out`,
/// diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// 28x28 ASCII rendering, one character per pixel.
std::string ascii_image(const std::vector<float>& pixels);

}  // namespace apg::cli
