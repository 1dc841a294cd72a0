#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace fairfed::cli {

/// Runs one subcommand (`run`, `partition-preview`, `summarize`, `compare`).
/// `args` excludes the program name. Returns the process exit code.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fairfed::cli
