#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace hbnn::cli {

enum ExitCode : int { ok = 0, property_failure = 1, config_error = 2, numeric_error = 3 };

/// Runs the command line `args` (program name excluded).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// key=value lines, '#' comments, blank lines ignored, turned into
/// "--key=value" flags. Throws UsageError on a malformed line.
std::vector<std::string> read_config_flags(const std::string& path);

}  // namespace hbnn::cli
