#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "rwre/env.hpp"

namespace rwre {

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"walk", "branching", "lyapunov", "kappa", "pi", "lln",
                                              "tails", "tran", "collapse", "uz-check", "nu-tail"};
  return names;
}

/// Parsed configuration file. The format is one `key = value` per line;
/// `#` starts a comment; `env.atom` may repeat. Every key must be consumed
/// by the experiment that runs, otherwise ConfigError is raised.
class ExperimentConfig {
 public:
  static ExperimentConfig parse(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& file);

  std::string experiment;
  std::uint64_t seed = 1;
  int workers = 1;
  EnvSpec env;

  /// Typed accessors with defaults and inclusive bounds; they mark the key
  /// as used. Throw ConfigError on malformed or out-of-range values.
  std::int64_t get_int(const std::string& key, std::int64_t fallback, std::int64_t lo, std::int64_t hi);
  double get_real(const std::string& key, double fallback, double lo, double hi);
  bool get_bool(const std::string& key, bool fallback);
  std::string get_choice(const std::string& key, const std::string& fallback, const std::vector<std::string>& choices);
  std::vector<double> get_reals(const std::string& key, const std::vector<double>& fallback);
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  /// Throws ConfigError naming the first key nothing asked for.
  void check_all_used() const;

  /// Key/value pairs as read, for the summary echo (repeated keys joined by "; ").
  std::map<std::string, std::string> echo() const;

 private:
  std::map<std::string, std::vector<std::string>> values_;
  mutable std::set<std::string> used_;
  const std::string* raw(const std::string& key);
};

struct RunOptions {
  std::filesystem::path out_dir = ".";
  bool quiet = false;
};

struct RunOutcome {
  bool all_passed = false;
  bool error = false;
  std::filesystem::path summary_file;
  std::vector<std::filesystem::path> files;
};

/// Dispatches the configured experiment, writes <experiment>.csv (and any
/// extra data files) plus summary.json into out_dir. Module errors are
/// captured into the summary and reported as error = true.
RunOutcome run(ExperimentConfig& config, const RunOptions& options);

/// Version string fixed at build time.
const char* version();

}  // namespace rwre
