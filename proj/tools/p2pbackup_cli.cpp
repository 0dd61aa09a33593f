// p2pbackup: sweep runner, trace generator, baseline planner and report builder.
//
// Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "p2pbackup/experiment.hpp"

namespace {

using namespace p2pbackup;

constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

// Prints warnings, throws ConfigError on errors.
ExperimentSpec load_or_throw(const std::string& path) {
  auto result = load_config(path);
  for (const auto& d : result.warnings()) std::cerr << path << ": " << d.describe() << "\n";
  if (!result.ok()) throw ConfigError(result.errors());
  return std::move(*result.spec);
}

int cmd_simulate(const std::string& config, int jobs, const std::string& out) {
  auto spec = load_or_throw(config);
  if (!out.empty()) spec.output_dir = out;
  std::cerr << "running " << spec.cell_count() << " cells into " << spec.output_dir.string() << "\n";
  const auto result = run_experiment(spec, jobs);
  for (const auto& row : redundancy_summary(result.outcomes)) {
    std::printf("%-8s tau=%-5s w=%-4s runs=%-3d completed=%-5d mean_r=%.6g\n", to_string(row.policy).c_str(),
                duration_label(row.tau).c_str(), duration_label(row.w).c_str(), row.runs, row.completed, row.mean_r);
  }
  std::cerr << "wrote " << result.files.size() << " files\n";
  return 0;
}

int cmd_gen_traces(const std::string& config, const std::string& out, const std::string& bandwidth_out) {
  auto spec = load_or_throw(config);
  if (spec.traces.file) {
    throw ConfigError({{"traces.file", "gen-traces needs synthetic parameters, not a trace file", std::nullopt, false}});
  }
  const auto traces = generate_synthetic_traces(spec.traces.synthetic);
  std::ofstream f(out, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + out + " for writing");
  write_traces(f, traces);
  if (!f.flush()) throw std::runtime_error("write failed: " + out);
  if (!bandwidth_out.empty()) {
    std::ofstream b(bandwidth_out, std::ios::binary);
    if (!b) throw std::runtime_error("cannot open " + bandwidth_out + " for writing");
    load_bandwidth(spec.traces).write(b);
    if (!b.flush()) throw std::runtime_error("write failed: " + bandwidth_out);
  }
  std::cerr << "wrote " << traces.size() << " traces to " << out << "\n";
  return 0;
}

int cmd_plan(int k, double availability, double target) {
  int n = 0;
  try {
    n = baseline_fragment_count(k, availability, target);
  } catch (const std::invalid_argument& e) {
    throw ConfigError({{"plan", e.what(), std::nullopt, false}});
  }
  std::printf("k = %d\navailability = %g\ntarget = %g\nn = %d\nr = %.17g\n", k, availability, target, n,
              redundancy_factor(n, k));
  return 0;
}

int cmd_report(const std::string& in, const std::string& format, const std::string& out) {
  ExportFormat f;
  try {
    f = export_format_from_string(format);
  } catch (const std::invalid_argument& e) {
    throw ConfigError({{"format", e.what(), std::nullopt, false}});
  }
  const auto files = report_from_cells(in, f, out.empty() ? in : out);
  for (const auto& p : files) std::cout << p.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trace-driven P2P backup simulator and redundancy planner"};
  app.require_subcommand(1);

  std::string config, out, in, format = "csv", bandwidth_out;
  int jobs = 1, k = 0;
  double availability = 0.0, target = 0.0;

  auto* simulate = app.add_subcommand("simulate", "Run the configured experiment grid");
  simulate->add_option("--config", config, "Experiment config (INI)")->required();
  simulate->add_option("--jobs", jobs, "Grid cells run in parallel")->check(CLI::PositiveNumber);
  simulate->add_option("--out", out, "Output directory (overrides [output] dir)");

  auto* gen = app.add_subcommand("gen-traces", "Write synthetic availability traces");
  gen->add_option("--config", config, "Config whose [traces] section holds the generator parameters")->required();
  gen->add_option("--out", out, "Trace CSV to write")->required();
  gen->add_option("--bandwidth-out", bandwidth_out, "Also write the bandwidth samples here");

  auto* plan = app.add_subcommand("plan", "Fragment count of the availability baseline");
  plan->add_option("--k", k, "Fragments needed to restore")->required();
  plan->add_option("--availability", availability, "Mean peer availability")->required();
  plan->add_option("--target", target, "Target object availability")->required();

  auto* report = app.add_subcommand("report", "Re-aggregate cell outcomes of an earlier run");
  report->add_option("--in", in, "Output directory of a simulate run")->required();
  report->add_option("--format", format, "csv or json");
  report->add_option("--out", out, "Where to write (default: --in)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*simulate) return cmd_simulate(config, jobs, out);
    if (*gen) return cmd_gen_traces(config, out, bandwidth_out);
    if (*plan) return cmd_plan(k, availability, target);
    if (*report) return cmd_report(in, format, out);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kConfigError;
}
