#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pbq::cli {

/// Runs one invocation; args excludes the program name. Machine-readable
/// output goes to `out`, diagnostics and human summaries to `err`.
/// Returns the process exit code.
int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

/// Shortest round-trip decimal, always with a fractional part ("2.0").
std::string format_number(double v);

} // namespace pbq::cli
