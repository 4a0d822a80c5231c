#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nasoa::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,
  kMissingInput = 3,
  kInternalError = 4,
};

inline constexpr const char* kVersion = "0.1.0";

/// Runs one command line (without the program name). Diagnostics go to err,
/// progress to out.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// FNV-1a of a byte string, as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace nasoa::cli
