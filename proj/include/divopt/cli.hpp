#pragma once

#include <iosfwd>
#include <map>
#include <string>

#include "divopt/model.hpp"

namespace divopt::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_config = 2;
inline constexpr int exit_numeric = 3;

/// Parsed `key = value` entries. Values stay textual until a consumer asks
/// for a number, so error messages can quote them.
using Entries = std::map<std::string, std::string>;

/// Reads a flat `key = value` file; `#` starts a comment. Throws ConfigError on
/// malformed lines, unknown keys or duplicates.
Entries read_config_file(const std::string& path);

/// Resolves exactly one parameter group (normal, raw or Cramer-Lundberg).
/// Returns the reference set when `entries` holds no model key and
/// `allow_default` is set. Throws ConfigError or InvariantViolation.
ModelParams resolve_params(const Entries& entries, bool allow_default);

/// Full command-line entry point. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace divopt::cli
