#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "p2pbackup/simulator.hpp"

namespace p2pbackup {

struct CdfPoint {
  double value = 0.0;
  double fraction = 0.0;

  friend bool operator==(const CdfPoint&, const CdfPoint&) = default;
};

/// Empirical CDF as a step function; duplicate values are collapsed.
struct CdfSeries {
  std::string label;
  std::vector<CdfPoint> points;
};

CdfSeries cdf(std::span<const double> values, std::string label = {});

/// Smallest value whose cumulative fraction reaches q, q in (0, 1].
double quantile(const CdfSeries& series, double q);
double median(const CdfSeries& series);
/// Lower median of the raw values.
double median(std::span<const double> values);

/// TTB/minTTB over completed backups; TTR/minTTR over completed restores.
/// Throws std::logic_error on a ratio below 1, which the simulator rules out.
std::vector<double> ttb_ratios(std::span<const SimulationOutcome> runs);
std::vector<double> ttr_ratios(std::span<const SimulationOutcome> runs);

/// One configuration, averaged over its runs. Percentages are of all peers;
/// the *_of_deaths fields use peers that died as the denominator instead.
struct LossRow {
  PolicyKind policy = PolicyKind::kAdaptive;
  Seconds tau = 0.0;
  Seconds w = 0.0;
  int runs = 0;
  double peers = 0.0;  // per run
  double total_pct = 0.0;
  double incomplete_pct = 0.0;
  double unavoidable_pct = 0.0;
  double failed_restore_pct = 0.0;
  double deaths = 0.0;  // per run
  double total_pct_of_deaths = 0.0;
  double incomplete_pct_of_deaths = 0.0;
  double unavoidable_pct_of_deaths = 0.0;
  double failed_restore_pct_of_deaths = 0.0;
  // Still running at the horizon; not counted as losses. Per run.
  double unfinished_backups = 0.0;
  double unfinished_restores = 0.0;
};

struct LossTable {
  std::vector<LossRow> rows;
};

/// All runs must share one configuration; only the seed may differ.
LossRow categorize_losses(std::span<const SimulationOutcome> runs);

/// unavoidable <= incomplete <= total and total == incomplete + failed, for both denominators.
bool accounting_holds(const LossRow& row, double tolerance = 1e-9);

struct RedundancyRow {
  PolicyKind policy = PolicyKind::kAdaptive;
  Seconds tau = 0.0;
  Seconds w = 0.0;
  int runs = 0;
  int completed = 0;  // completed backups over all runs
  double mean_r = 0.0;
};

/// Mean n/k per (policy, tau, w): average over runs of each run's mean over
/// completed peers. Baseline groups report n_fixed / k.
std::vector<RedundancyRow> redundancy_summary(std::span<const SimulationOutcome> runs);

struct GroupReport {
  PolicyKind policy = PolicyKind::kAdaptive;
  Seconds tau = 0.0;
  Seconds w = 0.0;
  int n_fixed = 0;
  int k = 0;
  std::vector<std::uint64_t> seeds;
  RedundancyRow redundancy;
  LossRow losses;
  CdfSeries ttb_ratio;
  CdfSeries ttr_ratio;
  double median_ttb_ratio = 0.0;  // NaN when there is nothing to rank
  double median_ttr_ratio = 0.0;
};

struct Report {
  std::vector<GroupReport> groups;  // ordered by policy, tau, w

  LossTable loss_table() const;
};

/// Groups runs by (policy, tau, w) and aggregates each group.
Report build_report(std::span<const SimulationOutcome> runs);

enum class ExportFormat { kCsv, kJson };
ExportFormat export_format_from_string(const std::string& name);

/// Value rounded to 6 significant digits, as written by every export.
double round6(double value);

/// "{policy}_{tau}_{w}_{metric}"
std::string series_basename(PolicyKind policy, Seconds tau, Seconds w, const std::string& metric);

void write_cdf_csv(std::ostream& out, const CdfSeries& series);
CdfSeries read_cdf_csv(std::istream& in);
void write_loss_csv(std::ostream& out, const LossTable& table);
LossTable read_loss_csv(std::istream& in);
void write_redundancy_csv(std::ostream& out, std::span<const RedundancyRow> rows);

/// JSON document for the whole report; see schemas/report.schema.json.
std::string report_json(const Report& report);

/// Writes per-group CDF files plus redundancy, losses and (for JSON) report
/// files into `dir`. Returns the paths written, in order.
std::vector<std::filesystem::path> export_report(const Report& report, ExportFormat format,
                                                 const std::filesystem::path& dir);

}  // namespace p2pbackup
