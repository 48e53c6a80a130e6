#pragma once

// Command-line front end: gen-data, train, sample, trajectory, ablate and
// inspect. The dispatcher is a library function so tests can drive it
// in-process; tools/main.cpp only forwards argv.

#include <iosfwd>
#include <string>
#include <vector>

namespace cartoondiff::cli {

inline constexpr const char* kToolVersion = CARTOONDIFF_VERSION;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Runs one command. `args` excludes the program name. Usage text and
/// errors go to `err`, regular reports to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Parses `key = value` lines; '#' starts a comment. Throws FormatError on a
/// line without '=' and IoError when the file cannot be read.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path);

}  // namespace cartoondiff::cli
