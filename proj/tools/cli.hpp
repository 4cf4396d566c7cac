#pragma once

// Command-line front end. Subcommands: pdf, moments, bounds, simulate, fit,
// report, rerun. Exit codes: 0 success, 1 runtime error, 2 usage error.

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace blochwalk::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Manifest path used when the primary output goes to stdout.
inline constexpr const char* kStdoutManifest = "blochwalk-manifest.json";

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Runs one invocation; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Shortest form with 17 significant digits; round-trips every double.
std::string format_double(double v);

}  // namespace blochwalk::cli
