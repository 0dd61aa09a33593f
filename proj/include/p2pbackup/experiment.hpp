#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "p2pbackup/metrics.hpp"
#include "p2pbackup/simulator.hpp"
#include "p2pbackup/traces.hpp"

namespace p2pbackup {

struct Diagnostic {
  std::string field;  // "section.key", or empty for syntax errors
  std::string message;
  std::optional<std::size_t> line;
  bool warning = false;

  std::string describe() const;
};

/// Carries every error-level diagnostic of a rejected configuration.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<Diagnostic> diagnostics);
  const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }

 private:
  std::vector<Diagnostic> diagnostics_;
};

struct TraceSource {
  std::optional<std::filesystem::path> file;  // CSV traces; synthetic when unset
  Seconds horizon = 90.0 * kDay;              // truncation horizon for file traces
  SyntheticTraceParams synthetic;
  double min_availability = 4.0 / 24.0;
  int max_peers = 0;  // keep the first N traces after filtering; 0 keeps all

  std::optional<std::filesystem::path> bandwidth_file;
  BytesPerSecond bandwidth_median = 77.0 * kKiB;
  BytesPerSecond bandwidth_mean = 428.0 * kKiB;
  int bandwidth_samples = 10000;
  std::uint64_t bandwidth_seed = 20100101;
  double downlink_factor = 4.0;
};

struct ExperimentSpec {
  PolicyConfig base;
  std::optional<int> baseline_fragments;  // overrides the computed baseline n
  int max_parallel_uploads = 4;
  int n_cap_factor = 10;

  std::vector<PolicyKind> policies{PolicyKind::kAdaptive, PolicyKind::kBaseline};
  std::vector<Seconds> ws{2.0 * kWeek};
  std::vector<Seconds> taus{kYear};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};

  TraceSource traces;

  std::filesystem::path output_dir = "out";
  std::vector<ExportFormat> formats{ExportFormat::kCsv, ExportFormat::kJson};
  bool event_log = false;

  std::size_t cell_count() const { return policies.size() * taus.size() * ws.size() * seeds.size(); }
};

struct ConfigResult {
  std::optional<ExperimentSpec> spec;
  std::vector<Diagnostic> diagnostics;

  bool ok() const { return spec.has_value(); }
  std::vector<Diagnostic> errors() const;
  std::vector<Diagnostic> warnings() const;
};

/// Parses INI text. Omitted keys take the defaults above. Relative paths are
/// resolved against `base_dir` when it is given.
ConfigResult validate_config(std::string_view text, const std::filesystem::path& base_dir = {});

/// Reads and validates a config file; unreadable files yield a diagnostic.
ConfigResult load_config(const std::filesystem::path& path);

/// Resolved spec as config text; validate_config(render_config(s)) gives back s.
std::string render_config(const ExperimentSpec& spec);

/// Baseline n for the spec: the override, or the smallest n meeting the target.
int baseline_n(const ExperimentSpec& spec);

/// Loads or generates traces, filters them and applies max_peers.
std::vector<NamedTrace> load_traces(const TraceSource& source);
BandwidthDistribution load_bandwidth(const TraceSource& source);

struct GridCell {
  PolicyKind policy = PolicyKind::kAdaptive;
  Seconds tau = 0.0;
  Seconds w = 0.0;
  std::uint64_t seed = 0;

  std::string name() const;  // "{policy}_{tau}_{w}_seed{seed}"
};

/// Cells ordered by policy, tau, w, seed.
std::vector<GridCell> expand_grid(const ExperimentSpec& spec);

/// Per-peer outcome table with run metadata; values use 17 significant digits.
void write_outcome_csv(std::ostream& out, const SimulationOutcome& outcome);
SimulationOutcome read_outcome_csv(std::istream& in);

struct ExperimentResult {
  std::vector<SimulationOutcome> outcomes;  // in grid order
  std::vector<std::filesystem::path> files;
};

/// Runs every grid cell on `jobs` threads and writes cells/, aggregates and
/// manifest.ini under spec.output_dir. Inputs and the output directory are
/// checked before any simulation starts.
ExperimentResult run_experiment(const ExperimentSpec& spec, int jobs = 1);

/// Re-aggregates cells/*.csv under `dir` and writes the report files to `out`.
std::vector<std::filesystem::path> report_from_cells(const std::filesystem::path& dir, ExportFormat format,
                                                     const std::filesystem::path& out);

}  // namespace p2pbackup
