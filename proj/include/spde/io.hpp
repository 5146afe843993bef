#ifndef SPDE_IO_HPP
#define SPDE_IO_HPP

#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "spde/experiments.hpp"

namespace spde {

inline constexpr const char* kCodeVersion = "0.1.0";

enum class ExperimentKind { tails, stable, pitchfork, selftest, schauder, probe };

std::string kind_name(ExperimentKind k);

struct SchauderProbeConfig {
  double alpha = -0.5;
  double beta = 1.0;
  int N = 16;
  int M = 0;
  uint64_t seed = 6;
};

struct OutputOptions {
  std::string directory = "out";
  bool json = true;
  bool csv = true;
};

/// Aggregated validation failure: every violation, not just the first.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

struct RunConfig {
  ExperimentKind kind = ExperimentKind::selftest;
  TailConfig tails;
  StableConfig stable;
  PitchforkConfig pitchfork;
  PerpConfig perp;
  ProbeConfig probe;
  SchauderProbeConfig schauder;
  std::string pitchfork_mode = "exit";  // "exit" | "perp"
  OutputOptions output;
};

/// key = value sections; '#' comments; unknown keys are errors naming the key.
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);

/// Canonical serialisation: parse(serialize(c)) reproduces serialize(c).
std::string serialize_config(const RunConfig& cfg);

uint64_t fnv1a64(const void* data, size_t len);
std::string config_hash(const RunConfig& cfg);

struct ManifestEntry {
  std::string name;
  uint64_t bytes = 0;
  std::string checksum;  // fnv1a64 hex of file contents
};

struct RunManifest {
  std::string config_hash;
  std::string code_version = kCodeVersion;
  std::string config_text;
  std::string started, finished;
  bool incomplete = true;
  std::vector<ManifestEntry> files;

  void add_file(const std::string& dir, const std::string& name);
  void write(const std::string& path) const;
  static RunManifest read(const std::string& path);
};

// Report serialisation. Each writes <dir>/report.json and plot-ready CSVs,
// registering every file in the manifest.
void write_report(const TailReport& r, const std::string& dir, RunManifest& man);
void write_report(const StableReport& r, const std::string& dir, RunManifest& man);
void write_report(const ExitReport& r, const std::string& dir, RunManifest& man);
void write_report(const PerpReport& r, const std::string& dir, RunManifest& man);
void write_report(const ProbeReport& r, const std::string& dir, RunManifest& man);

/// Dispatches the experiment, writes artifacts, evaluates the statistical
/// gates. Returns 0 (pass) or 2 (gate failure); throws on runtime errors.
int run_experiment(const RunConfig& cfg, std::ostream& log);

/// Prints a human-readable summary from a manifest; verifies checksums.
/// Returns 0, or 1 on integrity errors.
int report_command(const std::string& manifest_path, std::ostream& os);

/// Oracle suite: Wick identities, chaos oracle vs MC, Parseval, OU variance.
int selftest(bool quick, std::ostream& os);

}  // namespace spde

#endif
