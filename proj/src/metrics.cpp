#include "p2pbackup/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include <json.hpp>

namespace p2pbackup {

namespace {

std::string fmt6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

double parse_double(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::invalid_argument("not a number: '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

void expect_header(std::istream& in, const std::string& header) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("missing CSV header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header) throw std::invalid_argument("unexpected CSV header '" + line + "'");
}

void check_same_config(const SimulationOutcome& a, const SimulationOutcome& b) {
  if (a.policy != b.policy || a.n_fixed != b.n_fixed || a.k != b.k || a.tau != b.tau || a.w != b.w ||
      a.horizon != b.horizon || a.peers.size() != b.peers.size()) {
    throw std::invalid_argument("outcomes mix configurations; only the seed may differ");
  }
}

double pct(double part, double whole) { return whole > 0.0 ? 100.0 * part / whole : 0.0; }

const char* kLossHeader =
    "policy,tau_s,w_s,runs,peers,total_pct,incomplete_pct,unavoidable_pct,failed_restore_pct,deaths,"
    "total_pct_of_deaths,incomplete_pct_of_deaths,unavoidable_pct_of_deaths,failed_restore_pct_of_deaths,"
    "unfinished_backups,unfinished_restores";

}  // namespace

CdfSeries cdf(std::span<const double> values, std::string label) {
  if (values.empty()) throw std::invalid_argument("cdf of an empty sample");
  std::vector<double> sorted(values.begin(), values.end());
  for (double v : sorted) {
    if (std::isnan(v)) throw std::invalid_argument("cdf sample contains NaN");
  }
  std::sort(sorted.begin(), sorted.end());
  CdfSeries out{std::move(label), {}};
  const double n = static_cast<double>(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double fraction = static_cast<double>(i + 1) / n;
    if (!out.points.empty() && out.points.back().value == sorted[i]) {
      out.points.back().fraction = fraction;
    } else {
      out.points.push_back({sorted[i], fraction});
    }
  }
  return out;
}

double quantile(const CdfSeries& series, double q) {
  if (series.points.empty()) throw std::invalid_argument("quantile of an empty series");
  if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("quantile level must lie in (0,1]");
  for (const auto& p : series.points) {
    if (p.fraction >= q) return p.value;
  }
  return series.points.back().value;
}

double median(const CdfSeries& series) { return quantile(series, 0.5); }

double median(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty sample");
  std::vector<double> sorted(values.begin(), values.end());
  const auto mid = sorted.begin() + static_cast<std::ptrdiff_t>((sorted.size() - 1) / 2);
  std::nth_element(sorted.begin(), mid, sorted.end());
  return *mid;
}

std::vector<double> ttb_ratios(std::span<const SimulationOutcome> runs) {
  std::vector<double> out;
  for (const auto& run : runs) {
    for (const auto& p : run.peers) {
      if (!p.backup_complete || !p.min_ttb || !(*p.min_ttb > 0.0)) continue;
      const double r = *p.ttb() / *p.min_ttb;
      if (r < 1.0 - 1e-9) throw std::logic_error("TTB below minTTB for peer " + p.id);
      out.push_back(r);
    }
  }
  return out;
}

std::vector<double> ttr_ratios(std::span<const SimulationOutcome> runs) {
  std::vector<double> out;
  for (const auto& run : runs) {
    for (const auto& p : run.peers) {
      if (!p.restore_complete || !(p.min_ttr > 0.0)) continue;
      const double r = *p.ttr() / p.min_ttr;
      if (r < 1.0 - 1e-9) throw std::logic_error("TTR below minTTR for peer " + p.id);
      out.push_back(r);
    }
  }
  return out;
}

LossRow categorize_losses(std::span<const SimulationOutcome> runs) {
  if (runs.empty()) throw std::invalid_argument("categorize_losses needs at least one run");
  LossRow row;
  row.policy = runs.front().policy;
  row.tau = runs.front().tau;
  row.w = runs.front().w;
  row.runs = static_cast<int>(runs.size());
  double incomplete_sum = 0.0, unavoidable_sum = 0.0, failed_sum = 0.0, deaths_sum = 0.0;
  for (const auto& run : runs) {
    check_same_config(runs.front(), run);
    double incomplete = 0.0, unavoidable = 0.0, failed = 0.0, deaths = 0.0;
    for (const auto& p : run.peers) {
      if (p.death_time) deaths += 1.0;
      if (is_incomplete_backup(p.loss)) incomplete += 1.0;
      if (p.loss == LossCategory::kIncompleteUnavoidable) unavoidable += 1.0;
      if (p.loss == LossCategory::kFailedRestore) failed += 1.0;
      if (p.unfinished_backup_at_horizon) row.unfinished_backups += 1.0;
      if (p.unfinished_restore_at_horizon) row.unfinished_restores += 1.0;
    }
    const double peers = static_cast<double>(run.peers.size());
    row.peers += peers;
    row.incomplete_pct += pct(incomplete, peers);
    row.unavoidable_pct += pct(unavoidable, peers);
    row.failed_restore_pct += pct(failed, peers);
    incomplete_sum += incomplete;
    unavoidable_sum += unavoidable;
    failed_sum += failed;
    deaths_sum += deaths;
  }
  const double n = static_cast<double>(runs.size());
  row.peers /= n;
  row.incomplete_pct /= n;
  row.unavoidable_pct /= n;
  row.failed_restore_pct /= n;
  row.total_pct = row.incomplete_pct + row.failed_restore_pct;
  row.unfinished_backups /= n;
  row.unfinished_restores /= n;
  row.deaths = deaths_sum / n;
  // Deaths vary per run and can be zero, so this denominator is pooled.
  row.incomplete_pct_of_deaths = pct(incomplete_sum, deaths_sum);
  row.unavoidable_pct_of_deaths = pct(unavoidable_sum, deaths_sum);
  row.failed_restore_pct_of_deaths = pct(failed_sum, deaths_sum);
  row.total_pct_of_deaths = row.incomplete_pct_of_deaths + row.failed_restore_pct_of_deaths;
  return row;
}

bool accounting_holds(const LossRow& row, double tolerance) {
  auto ok = [&](double total, double incomplete, double unavoidable, double failed) {
    return unavoidable <= incomplete + tolerance && incomplete <= total + tolerance &&
           std::abs(total - (incomplete + failed)) <= tolerance && failed >= 0.0 && unavoidable >= 0.0;
  };
  return ok(row.total_pct, row.incomplete_pct, row.unavoidable_pct, row.failed_restore_pct) &&
         ok(row.total_pct_of_deaths, row.incomplete_pct_of_deaths, row.unavoidable_pct_of_deaths,
            row.failed_restore_pct_of_deaths);
}

namespace {

using GroupKey = std::tuple<PolicyKind, Seconds, Seconds>;

std::map<GroupKey, std::vector<SimulationOutcome>> group_runs(std::span<const SimulationOutcome> runs) {
  std::map<GroupKey, std::vector<SimulationOutcome>> groups;
  for (const auto& run : runs) groups[{run.policy, run.tau, run.w}].push_back(run);
  return groups;
}

RedundancyRow summarize_redundancy(std::span<const SimulationOutcome> runs) {
  RedundancyRow row;
  row.policy = runs.front().policy;
  row.tau = runs.front().tau;
  row.w = runs.front().w;
  row.runs = static_cast<int>(runs.size());
  double sum = 0.0;
  int counted = 0;
  for (const auto& run : runs) {
    check_same_config(runs.front(), run);
    for (const auto& p : run.peers) row.completed += p.backup_complete ? 1 : 0;
    const double r = run.mean_redundancy();
    if (std::isnan(r)) continue;
    sum += r;
    ++counted;
  }
  if (row.policy == PolicyKind::kBaseline) {
    row.mean_r = redundancy_factor(runs.front().n_fixed, runs.front().k);
  } else {
    row.mean_r = counted == 0 ? std::nan("") : sum / counted;
  }
  return row;
}

}  // namespace

std::vector<RedundancyRow> redundancy_summary(std::span<const SimulationOutcome> runs) {
  std::vector<RedundancyRow> out;
  for (const auto& [key, group] : group_runs(runs)) out.push_back(summarize_redundancy(group));
  return out;
}

LossTable Report::loss_table() const {
  LossTable t;
  for (const auto& g : groups) t.rows.push_back(g.losses);
  return t;
}

Report build_report(std::span<const SimulationOutcome> runs) {
  Report report;
  for (const auto& [key, group] : group_runs(runs)) {
    GroupReport g;
    g.policy = std::get<0>(key);
    g.tau = std::get<1>(key);
    g.w = std::get<2>(key);
    g.n_fixed = group.front().n_fixed;
    g.k = group.front().k;
    for (const auto& run : group) g.seeds.push_back(run.seed);
    g.redundancy = summarize_redundancy(group);
    g.losses = categorize_losses(group);
    const auto ttb = ttb_ratios(group);
    const auto ttr = ttr_ratios(group);
    g.ttb_ratio.label = series_basename(g.policy, g.tau, g.w, "ttb_ratio");
    g.ttr_ratio.label = series_basename(g.policy, g.tau, g.w, "ttr_ratio");
    if (!ttb.empty()) g.ttb_ratio = cdf(ttb, g.ttb_ratio.label);
    if (!ttr.empty()) g.ttr_ratio = cdf(ttr, g.ttr_ratio.label);
    g.median_ttb_ratio = ttb.empty() ? std::nan("") : median(ttb);
    g.median_ttr_ratio = ttr.empty() ? std::nan("") : median(ttr);
    report.groups.push_back(std::move(g));
  }
  return report;
}

ExportFormat export_format_from_string(const std::string& name) {
  if (name == "csv") return ExportFormat::kCsv;
  if (name == "json") return ExportFormat::kJson;
  throw std::invalid_argument("unknown format '" + name + "' (use csv or json)");
}

double round6(double value) {
  if (!std::isfinite(value)) return value;
  return parse_double(fmt6(value));
}

std::string series_basename(PolicyKind policy, Seconds tau, Seconds w, const std::string& metric) {
  return to_string(policy) + "_" + duration_label(tau) + "_" + duration_label(w) + "_" + metric;
}

void write_cdf_csv(std::ostream& out, const CdfSeries& series) {
  out << "value,cumulative_fraction\n";
  for (const auto& p : series.points) out << fmt6(p.value) << ',' << fmt6(p.fraction) << '\n';
}

CdfSeries read_cdf_csv(std::istream& in) {
  expect_header(in, "value,cumulative_fraction");
  CdfSeries s;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != 2) throw std::invalid_argument("CDF row needs 2 fields: '" + line + "'");
    s.points.push_back({parse_double(cells[0]), parse_double(cells[1])});
  }
  return s;
}

void write_loss_csv(std::ostream& out, const LossTable& table) {
  out << kLossHeader << '\n';
  for (const auto& r : table.rows) {
    out << to_string(r.policy) << ',' << fmt6(r.tau) << ',' << fmt6(r.w) << ',' << r.runs << ',' << fmt6(r.peers);
    for (double v : {r.total_pct, r.incomplete_pct, r.unavoidable_pct, r.failed_restore_pct, r.deaths,
                     r.total_pct_of_deaths, r.incomplete_pct_of_deaths, r.unavoidable_pct_of_deaths,
                     r.failed_restore_pct_of_deaths, r.unfinished_backups, r.unfinished_restores}) {
      out << ',' << fmt6(v);
    }
    out << '\n';
  }
}

LossTable read_loss_csv(std::istream& in) {
  expect_header(in, kLossHeader);
  LossTable t;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split(line);
    if (c.size() != 16) throw std::invalid_argument("loss row needs 16 fields: '" + line + "'");
    LossRow r;
    r.policy = policy_kind_from_string(c[0]);
    r.tau = parse_double(c[1]);
    r.w = parse_double(c[2]);
    r.runs = static_cast<int>(parse_double(c[3]));
    double* fields[] = {&r.peers,
                        &r.total_pct,
                        &r.incomplete_pct,
                        &r.unavoidable_pct,
                        &r.failed_restore_pct,
                        &r.deaths,
                        &r.total_pct_of_deaths,
                        &r.incomplete_pct_of_deaths,
                        &r.unavoidable_pct_of_deaths,
                        &r.failed_restore_pct_of_deaths,
                        &r.unfinished_backups,
                        &r.unfinished_restores};
    for (std::size_t i = 0; i < std::size(fields); ++i) *fields[i] = parse_double(c[4 + i]);
    t.rows.push_back(r);
  }
  return t;
}

void write_redundancy_csv(std::ostream& out, std::span<const RedundancyRow> rows) {
  out << "policy,tau_s,w_s,runs,completed,mean_r\n";
  for (const auto& r : rows) {
    out << to_string(r.policy) << ',' << fmt6(r.tau) << ',' << fmt6(r.w) << ',' << r.runs << ',' << r.completed
        << ',' << fmt6(r.mean_r) << '\n';
  }
}

namespace {

using json = nlohmann::ordered_json;

// Non-finite values become null.
json num(double v) { return std::isfinite(v) ? json(round6(v)) : json(nullptr); }

json cdf_json(const CdfSeries& s) {
  json points = json::array();
  for (const auto& p : s.points) points.push_back({round6(p.value), round6(p.fraction)});
  return {{"label", s.label}, {"points", points}};
}

json group_json(const GroupReport& g) {
  const auto& l = g.losses;
  json losses = {
      {"peers_per_run", num(l.peers)},
      {"deaths_per_run", num(l.deaths)},
      {"percent_of_peers",
       {{"total", num(l.total_pct)},
        {"incomplete_backup", num(l.incomplete_pct)},
        {"unavoidable", num(l.unavoidable_pct)},
        {"failed_restore", num(l.failed_restore_pct)}}},
      {"percent_of_deaths",
       {{"total", num(l.total_pct_of_deaths)},
        {"incomplete_backup", num(l.incomplete_pct_of_deaths)},
        {"unavoidable", num(l.unavoidable_pct_of_deaths)},
        {"failed_restore", num(l.failed_restore_pct_of_deaths)}}},
      {"unfinished_backups_per_run", num(l.unfinished_backups)},
      {"unfinished_restores_per_run", num(l.unfinished_restores)},
  };
  json ttb = cdf_json(g.ttb_ratio);
  ttb["median"] = num(g.median_ttb_ratio);
  json ttr = cdf_json(g.ttr_ratio);
  ttr["median"] = num(g.median_ttr_ratio);
  return {
      {"policy", to_string(g.policy)},
      {"tau", duration_label(g.tau)},
      {"tau_s", num(g.tau)},
      {"w", duration_label(g.w)},
      {"w_s", num(g.w)},
      {"k", g.k},
      {"n_fixed", g.n_fixed},
      {"seeds", g.seeds},
      {"redundancy",
       {{"runs", g.redundancy.runs}, {"completed", g.redundancy.completed}, {"mean_r", num(g.redundancy.mean_r)}}},
      {"losses", losses},
      {"ttb_ratio", ttb},
      {"ttr_ratio", ttr},
  };
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << content;
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace

std::string report_json(const Report& report) {
  json groups = json::array();
  for (const auto& g : report.groups) groups.push_back(group_json(g));
  return json{{"format_version", 1}, {"groups", groups}}.dump(2) + "\n";
}

std::vector<std::filesystem::path> export_report(const Report& report, ExportFormat format,
                                                 const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::string& name, const std::string& content) {
    const auto path = dir / name;
    write_file(path, content);
    written.push_back(path);
  };
  const std::string ext = format == ExportFormat::kCsv ? ".csv" : ".json";
  for (const auto& g : report.groups) {
    for (const CdfSeries* s : {&g.ttb_ratio, &g.ttr_ratio}) {
      if (format == ExportFormat::kCsv) {
        std::ostringstream out;
        write_cdf_csv(out, *s);
        emit(s->label + ext, out.str());
      } else {
        emit(s->label + ext, cdf_json(*s).dump(2) + "\n");
      }
    }
  }
  if (format == ExportFormat::kCsv) {
    std::vector<RedundancyRow> rows;
    for (const auto& g : report.groups) rows.push_back(g.redundancy);
    std::ostringstream red, loss;
    write_redundancy_csv(red, rows);
    write_loss_csv(loss, report.loss_table());
    emit("redundancy.csv", red.str());
    emit("losses.csv", loss.str());
  } else {
    emit("report.json", report_json(report));
  }
  return written;
}

}  // namespace p2pbackup
