#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace hlab {

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitNumerical = 3,
  kExitHypothesis = 4,
};

/// 64-bit FNV-1a hash.
std::uint64_t fnv1a64(std::string_view text);

/// Record written as manifest.json next to every run's artifacts.
struct RunManifest {
  std::string subcommand;
  std::string config_hash;
  /// Canonical config text followed by the applied overrides.
  std::string config_text;
  std::vector<std::pair<std::string, std::string>> parameters;
  std::vector<std::string> artifacts;
  double wall_time = 0.0;
  std::string version;
  std::string status = "ok";
  std::string error;
  int exit_code = 0;

  std::string to_json() const;
};

/// Runs one subcommand: solve, sweep, eikonal, norms, radiation,
/// concentration, verify-identities or check-hypotheses. `args` excludes the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string version_string();

}  // namespace hlab
