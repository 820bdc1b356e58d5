#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace sflow {

/// Flat `key = value` text; `#` starts a comment, `[section]` lines prefix
/// the following keys with `section.`. Every key must be consumed by the
/// experiment, otherwise ConfigError names it.
class Config {
 public:
  static Config parse(std::istream& is, const std::string& source = "<config>");
  static Config parse_string(const std::string& text);
  static Config load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get(const std::string& key, const std::string& fallback) const;
  std::string require(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_list(const std::string& key, const std::vector<double>& fallback) const;

  /// Throws ConfigError on the first key that was never read.
  void check_consumed() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> read_;
};

struct Verdict {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double bound = 0.0;
  std::string detail;
};

struct RunReport {
  std::string kind;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> config;
  std::vector<Verdict> verdicts;
  nlohmann::ordered_json diagnostics = nlohmann::ordered_json::object();
  /// file name -> contents, written next to summary.json.
  std::map<std::string, std::string> files;

  bool passed() const;
  nlohmann::ordered_json summary() const;
};

struct ExperimentInfo {
  std::string kind;
  std::string description;
};

const std::vector<ExperimentInfo>& experiment_catalog();

/// Runs the experiment named by `kind`; throws ConfigError on a bad or
/// unknown key.
RunReport run_experiment(const Config& cfg, int jobs = 1);

/// summary.json plus every table of the report.
void write_report(const RunReport& report, const std::string& dir);

/// Entry point shared by the command-line tool and its tests. Returns the
/// exit status: 0 pass, 1 failed check, 2 configuration error.
int cli_main(int argc, char** argv);

}  // namespace sflow
