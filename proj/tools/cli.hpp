#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace stereops::cli {

/// Runs the command line with argv-style arguments (args[0] is the program
/// name). Returns the process exit code; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// SVG line plot of per-epoch shape error (or total loss when no shape error
/// was recorded) from a loss-history TSV.
std::string curve_svg(const std::string& history_tsv);

}  // namespace stereops::cli
