#include "p2pbackup/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <exception>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace p2pbackup {

namespace pt = boost::property_tree;
namespace fs = std::filesystem;

std::string Diagnostic::describe() const {
  std::ostringstream out;
  out << (warning ? "warning" : "error");
  if (line) out << " (line " << *line << ")";
  if (!field.empty()) out << " " << field;
  out << ": " << message;
  return out.str();
}

namespace {

std::string summarize(const std::vector<Diagnostic>& diagnostics) {
  std::string out = "invalid configuration";
  for (const auto& d : diagnostics) out += "\n  " + d.describe();
  return out;
}

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Shortest text that parses back to the same double.
std::string shortest(double v) {
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double parse_real(std::string_view text) {
  const std::string s = trim(text);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::invalid_argument("expected a number, got '" + s + "'");
  }
  return v;
}

long long parse_integer(std::string_view text) {
  const std::string s = trim(text);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::invalid_argument("expected an integer, got '" + s + "'");
  }
  return v;
}

bool parse_bool(std::string_view text) {
  const std::string s = trim(text);
  if (s == "true" || s == "yes" || s == "1" || s == "on") return true;
  if (s == "false" || s == "no" || s == "0" || s == "off") return false;
  throw std::invalid_argument("expected true or false, got '" + s + "'");
}

std::vector<std::string> parse_list(std::string_view text) {
  std::vector<std::string> items;
  std::stringstream ss{std::string(text)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw std::invalid_argument("empty list item");
    items.push_back(item);
  }
  if (items.empty()) throw std::invalid_argument("list must not be empty");
  return items;
}

// "1-10, 42" -> 1..10, 42
std::vector<std::uint64_t> parse_seeds(std::string_view text) {
  std::vector<std::uint64_t> seeds;
  for (const auto& item : parse_list(text)) {
    const auto dash = item.find('-', 1);
    const long long lo = parse_integer(item.substr(0, dash));
    const long long hi = dash == std::string::npos ? lo : parse_integer(item.substr(dash + 1));
    if (lo < 0 || hi < lo) throw std::invalid_argument("bad seed range '" + item + "'");
    if (hi - lo > 100000) throw std::invalid_argument("seed range '" + item + "' is too long");
    for (long long s = lo; s <= hi; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
  }
  std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
  if (unique.size() != seeds.size()) throw std::invalid_argument("seeds must be distinct");
  return seeds;
}

// Line of each "section.key" in the raw text, for diagnostics.
std::map<std::string, std::size_t> key_lines(std::string_view text) {
  std::map<std::string, std::size_t> lines;
  std::stringstream ss{std::string(text)};
  std::string line, section;
  std::size_t number = 0;
  while (std::getline(ss, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t.front() == ';' || t.front() == '#') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      lines.emplace("[" + section + "]", number);
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = trim(std::string_view(t).substr(0, eq));
    lines.emplace(section.empty() ? key : section + "." + key, number);
  }
  return lines;
}

class Reader {
 public:
  Reader(const pt::ptree& root, std::map<std::string, std::size_t> lines, std::vector<Diagnostic>& out)
      : root_(root), lines_(std::move(lines)), out_(out) {}

  // Calls `apply` with the raw value when the key is present.
  void field(const std::string& section, const std::string& key, const std::function<void(const std::string&)>& apply) {
    known_[section].insert(key);
    const auto* sec = root_.get_child_optional(section).get_ptr();
    if (!sec) return;
    const auto value = sec->get_optional<std::string>(key);
    if (!value) return;
    try {
      apply(*value);
    } catch (const std::exception& e) {
      error(section + "." + key, e.what());
    }
  }

  void error(const std::string& field, const std::string& message, bool warning = false) {
    std::optional<std::size_t> line;
    if (auto it = lines_.find(field); it != lines_.end()) line = it->second;
    out_.push_back({field, message, line, warning});
  }

  void reject_unknown(const std::set<std::string>& free_sections) {
    // The INI reader drops sections without keys, so headers come from the raw text.
    for (const auto& [entry, line] : lines_) {
      if (entry.front() != '[') continue;
      const std::string name = entry.substr(1, entry.size() - 2);
      if (!free_sections.count(name) && !known_.count(name)) out_.push_back({name, "unknown section", line, false});
    }
    for (const auto& [name, child] : root_) {
      if (child.empty()) {
        error(name, "key outside a section");
        continue;
      }
      if (free_sections.count(name)) continue;
      auto it = known_.find(name);
      if (it == known_.end()) continue;  // reported above
      for (const auto& [key, value] : child) {
        if (!it->second.count(key)) error(name + "." + key, "unknown key");
      }
    }
  }

 private:
  const pt::ptree& root_;
  std::map<std::string, std::size_t> lines_;
  std::vector<Diagnostic>& out_;
  std::map<std::string, std::set<std::string>> known_;
};

fs::path resolve(const fs::path& base, const std::string& value) {
  fs::path p(value);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal();
}

}  // namespace

ConfigError::ConfigError(std::vector<Diagnostic> diagnostics)
    : std::runtime_error(summarize(diagnostics)), diagnostics_(std::move(diagnostics)) {}

std::vector<Diagnostic> ConfigResult::errors() const {
  std::vector<Diagnostic> out;
  for (const auto& d : diagnostics) {
    if (!d.warning) out.push_back(d);
  }
  return out;
}

std::vector<Diagnostic> ConfigResult::warnings() const {
  std::vector<Diagnostic> out;
  for (const auto& d : diagnostics) {
    if (d.warning) out.push_back(d);
  }
  return out;
}

ConfigResult validate_config(std::string_view text, const fs::path& base_dir) {
  ConfigResult result;
  auto& diags = result.diagnostics;
  pt::ptree root;
  try {
    std::istringstream in{std::string(text)};
    pt::ini_parser::read_ini(in, root);
  } catch (const pt::ini_parser_error& e) {
    diags.push_back({"", e.message(), e.line() > 0 ? std::optional<std::size_t>(e.line()) : std::nullopt, false});
    return result;
  }

  ExperimentSpec spec;
  auto& c = spec.base;
  auto& t = spec.traces;
  auto& g = t.synthetic;
  Reader r(root, key_lines(text), diags);
  auto duration = [](Seconds& dst) { return [&dst](const std::string& v) { dst = parse_duration(v); }; };
  auto size = [](Bytes& dst) { return [&dst](const std::string& v) { dst = parse_size(v); }; };
  auto real = [](double& dst) { return [&dst](const std::string& v) { dst = parse_real(v); }; };
  auto integer = [](int& dst) {
    return [&dst](const std::string& v) {
      const long long x = parse_integer(v);
      if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
        throw std::invalid_argument("out of range");
      }
      dst = static_cast<int>(x);
    };
  };
  auto seed = [](std::uint64_t& dst) {
    return [&dst](const std::string& v) {
      const long long x = parse_integer(v);
      if (x < 0) throw std::invalid_argument("must be >= 0");
      dst = static_cast<std::uint64_t>(x);
    };
  };

  r.field("policy", "object_size", size(c.object_size));
  r.field("policy", "fragment_size", size(c.fragment_size));
  r.field("policy", "sigma1", real(c.sigma1));
  r.field("policy", "alpha", real(c.alpha));
  r.field("policy", "sigma2_floor", duration(c.sigma2_floor));
  r.field("policy", "baseline_target", real(c.baseline_target_availability));
  r.field("policy", "baseline_availability", real(c.baseline_mean_availability));
  r.field("policy", "capacity", size(c.capacity));
  r.field("policy", "maintenance_timeout", [&](const std::string& v) { c.maintenance_timeout = parse_duration(v); });
  r.field("policy", "timeout_floor", duration(c.timeout_floor));
  r.field("policy", "baseline_fragments", [&](const std::string& v) {
    int n = 0;
    integer(n)(v);
    spec.baseline_fragments = n;
  });
  r.field("policy", "max_parallel_uploads", integer(spec.max_parallel_uploads));
  r.field("policy", "n_cap_factor", integer(spec.n_cap_factor));

  r.field("sweep", "policy", [&](const std::string& v) {
    spec.policies.clear();
    for (const auto& item : parse_list(v)) spec.policies.push_back(policy_kind_from_string(item));
  });
  r.field("sweep", "w", [&](const std::string& v) {
    spec.ws.clear();
    for (const auto& item : parse_list(v)) spec.ws.push_back(parse_duration(item));
  });
  r.field("sweep", "tau", [&](const std::string& v) {
    spec.taus.clear();
    for (const auto& item : parse_list(v)) spec.taus.push_back(parse_duration(item));
  });
  r.field("sweep", "seeds", [&](const std::string& v) { spec.seeds = parse_seeds(v); });

  r.field("traces", "file", [&](const std::string& v) { t.file = resolve(base_dir, trim(v)); });
  r.field("traces", "horizon_s", [&](const std::string& v) {
    t.horizon = parse_duration(v);
    g.horizon = t.horizon;
  });
  r.field("traces", "min_availability", real(t.min_availability));
  r.field("traces", "max_peers", integer(t.max_peers));
  r.field("traces", "peer_count", integer(g.peer_count));
  r.field("traces", "mean_session_s", duration(g.mean_session));
  r.field("traces", "beta_a", real(g.beta_a));
  r.field("traces", "beta_b", real(g.beta_b));
  r.field("traces", "min_target", real(g.min_target));
  r.field("traces", "always_on_fraction", real(g.always_on_fraction));
  r.field("traces", "targets", [&](const std::string& v) {
    g.targets.clear();
    for (const auto& item : parse_list(v)) g.targets.push_back(parse_real(item));
  });
  r.field("traces", "seed", seed(g.seed));
  r.field("traces", "bandwidth_file", [&](const std::string& v) { t.bandwidth_file = resolve(base_dir, trim(v)); });
  r.field("traces", "bandwidth_median", size(t.bandwidth_median));
  r.field("traces", "bandwidth_mean", size(t.bandwidth_mean));
  r.field("traces", "bandwidth_samples", integer(t.bandwidth_samples));
  r.field("traces", "bandwidth_seed", seed(t.bandwidth_seed));
  r.field("traces", "downlink_factor", real(t.downlink_factor));

  r.field("output", "dir", [&](const std::string& v) { spec.output_dir = resolve(base_dir, trim(v)); });
  r.field("output", "formats", [&](const std::string& v) {
    spec.formats.clear();
    for (const auto& item : parse_list(v)) spec.formats.push_back(export_format_from_string(item));
  });
  r.field("output", "event_log", [&](const std::string& v) { spec.event_log = parse_bool(v); });

  // [run] is written into manifests and carries no settings.
  r.reject_unknown({"run"});

  for (const auto& v : c.violations()) {
    const auto colon = v.find(':');
    const std::string name = v.substr(0, colon);
    if (name == "tau" || name == "w") continue;  // checked per sweep value below
    r.error("policy." + name, trim(std::string_view(v).substr(colon + 1)));
  }
  for (Seconds tau : spec.taus) {
    if (!(tau > 0.0)) r.error("sweep.tau", "every value must be > 0");
  }
  for (Seconds w : spec.ws) {
    if (!(w >= 0.0) || !std::isfinite(w)) r.error("sweep.w", "every value must be finite and >= 0");
  }
  if (spec.baseline_fragments && *spec.baseline_fragments < 1) {
    r.error("policy.baseline_fragments", "must be >= 1");
  }
  if (spec.max_parallel_uploads < 1) r.error("policy.max_parallel_uploads", "must be >= 1");
  if (spec.n_cap_factor < 1) r.error("policy.n_cap_factor", "must be >= 1");
  if (!(t.min_availability >= 0.0 && t.min_availability <= 1.0)) {
    r.error("traces.min_availability", "must lie in [0,1]");
  }
  if (t.max_peers < 0) r.error("traces.max_peers", "must be >= 0");
  if (!(t.horizon > 0.0) || !std::isfinite(t.horizon)) r.error("traces.horizon_s", "must be finite and > 0");
  if (!t.file) {
    for (const auto& v : g.violations()) {
      const auto colon = v.find(':');
      std::string name = v.substr(0, colon);
      if (name == "horizon") continue;  // checked above as horizon_s
      if (name == "mean_session") name = "mean_session_s";
      r.error("traces." + name, trim(std::string_view(v).substr(colon + 1)));
    }
  }
  if (!t.bandwidth_file) {
    if (!(t.bandwidth_median > 0.0) || !(t.bandwidth_mean > t.bandwidth_median)) {
      r.error("traces.bandwidth_mean", "log-normal bandwidth needs bandwidth_mean > bandwidth_median > 0");
    }
    if (t.bandwidth_samples < 1) r.error("traces.bandwidth_samples", "must be >= 1");
  }
  if (!(t.downlink_factor > 0.0)) r.error("traces.downlink_factor", "must be > 0");

  bool fatal = false;
  for (const auto& d : diags) fatal = fatal || !d.warning;
  if (!fatal && c.fragment_size > c.object_size) {
    r.error("policy.fragment_size", "exceeds object_size; k = 1 and the object is stored as whole copies", true);
  }
  if (!fatal) result.spec = std::move(spec);
  return result;
}

ConfigResult load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    ConfigResult r;
    r.diagnostics.push_back({"", "cannot read config file " + path.string(), std::nullopt, false});
    return r;
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return validate_config(buf.str(), path.parent_path());
}

std::string render_config(const ExperimentSpec& spec) {
  auto dur = [](Seconds s) {
    const std::string label = duration_label(s);
    return parse_duration(label) == s ? label : shortest(s);
  };
  auto join = [](const auto& items, auto fmt) {
    std::string out;
    for (const auto& it : items) out += (out.empty() ? "" : ", ") + fmt(it);
    return out;
  };
  const auto& c = spec.base;
  const auto& t = spec.traces;
  const auto& g = t.synthetic;
  std::ostringstream out;
  out << "[policy]\n"
      << "object_size = " << shortest(c.object_size) << "\n"
      << "fragment_size = " << shortest(c.fragment_size) << "\n"
      << "sigma1 = " << shortest(c.sigma1) << "\n"
      << "alpha = " << shortest(c.alpha) << "\n"
      << "sigma2_floor = " << dur(c.sigma2_floor) << "\n"
      << "baseline_target = " << shortest(c.baseline_target_availability) << "\n"
      << "baseline_availability = " << shortest(c.baseline_mean_availability) << "\n"
      << "capacity = " << shortest(c.capacity) << "\n";
  if (c.maintenance_timeout) out << "maintenance_timeout = " << dur(*c.maintenance_timeout) << "\n";
  out << "timeout_floor = " << dur(c.timeout_floor) << "\n";
  if (spec.baseline_fragments) out << "baseline_fragments = " << *spec.baseline_fragments << "\n";
  out << "max_parallel_uploads = " << spec.max_parallel_uploads << "\n"
      << "n_cap_factor = " << spec.n_cap_factor << "\n\n";

  out << "[sweep]\n"
      << "policy = " << join(spec.policies, [](PolicyKind p) { return to_string(p); }) << "\n"
      << "w = " << join(spec.ws, dur) << "\n"
      << "tau = " << join(spec.taus, dur) << "\n"
      << "seeds = " << join(spec.seeds, [](std::uint64_t s) { return std::to_string(s); }) << "\n\n";

  out << "[traces]\n";
  if (t.file) out << "file = " << t.file->string() << "\n";
  out << "horizon_s = " << dur(t.horizon) << "\n"
      << "min_availability = " << shortest(t.min_availability) << "\n"
      << "max_peers = " << t.max_peers << "\n";
  if (!t.file) {
    out << "peer_count = " << g.peer_count << "\n"
        << "mean_session_s = " << dur(g.mean_session) << "\n"
        << "beta_a = " << shortest(g.beta_a) << "\n"
        << "beta_b = " << shortest(g.beta_b) << "\n"
        << "min_target = " << shortest(g.min_target) << "\n"
        << "always_on_fraction = " << shortest(g.always_on_fraction) << "\n";
    if (!g.targets.empty()) out << "targets = " << join(g.targets, shortest) << "\n";
    out << "seed = " << g.seed << "\n";
  }
  if (t.bandwidth_file) {
    out << "bandwidth_file = " << t.bandwidth_file->string() << "\n";
  } else {
    out << "bandwidth_median = " << shortest(t.bandwidth_median) << "\n"
        << "bandwidth_mean = " << shortest(t.bandwidth_mean) << "\n"
        << "bandwidth_samples = " << t.bandwidth_samples << "\n"
        << "bandwidth_seed = " << t.bandwidth_seed << "\n";
  }
  out << "downlink_factor = " << shortest(t.downlink_factor) << "\n\n";

  out << "[output]\n"
      << "dir = " << spec.output_dir.string() << "\n"
      << "formats = "
      << join(spec.formats, [](ExportFormat f) { return std::string(f == ExportFormat::kCsv ? "csv" : "json"); })
      << "\n"
      << "event_log = " << (spec.event_log ? "true" : "false") << "\n";
  return out.str();
}

int baseline_n(const ExperimentSpec& spec) {
  if (spec.baseline_fragments) return *spec.baseline_fragments;
  return baseline_fragment_count(spec.base.k(), spec.base.baseline_mean_availability,
                                 spec.base.baseline_target_availability);
}

std::vector<NamedTrace> load_traces(const TraceSource& source) {
  std::vector<NamedTrace> traces;
  if (source.file) {
    std::ifstream in(*source.file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read trace file " + source.file->string());
    try {
      traces = parse_traces(in, source.horizon);
    } catch (const TraceParseError& e) {
      throw std::runtime_error(source.file->string() + ": " + e.what());
    }
  } else {
    traces = generate_synthetic_traces(source.synthetic);
  }
  traces = filter_min_availability(std::move(traces), source.min_availability);
  if (source.max_peers > 0 && traces.size() > static_cast<std::size_t>(source.max_peers)) {
    traces.resize(static_cast<std::size_t>(source.max_peers));
  }
  if (traces.empty()) throw std::runtime_error("no trace passes the availability filter");
  return traces;
}

BandwidthDistribution load_bandwidth(const TraceSource& source) {
  if (!source.bandwidth_file) {
    return BandwidthDistribution::lognormal(source.bandwidth_median, source.bandwidth_mean,
                                            static_cast<std::size_t>(source.bandwidth_samples), source.bandwidth_seed);
  }
  std::ifstream in(*source.bandwidth_file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read bandwidth file " + source.bandwidth_file->string());
  try {
    return BandwidthDistribution::parse(in);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(source.bandwidth_file->string() + ": " + e.what());
  }
}

std::string GridCell::name() const {
  return series_basename(policy, tau, w, "seed" + std::to_string(seed));
}

std::vector<GridCell> expand_grid(const ExperimentSpec& spec) {
  std::vector<PolicyKind> policies = spec.policies;
  std::vector<Seconds> taus = spec.taus, ws = spec.ws;
  std::vector<std::uint64_t> seeds = spec.seeds;
  std::sort(policies.begin(), policies.end());
  std::sort(taus.begin(), taus.end());
  std::sort(ws.begin(), ws.end());
  std::sort(seeds.begin(), seeds.end());
  policies.erase(std::unique(policies.begin(), policies.end()), policies.end());
  taus.erase(std::unique(taus.begin(), taus.end()), taus.end());
  ws.erase(std::unique(ws.begin(), ws.end()), ws.end());
  std::vector<GridCell> cells;
  for (auto p : policies) {
    for (auto tau : taus) {
      for (auto w : ws) {
        for (auto s : seeds) cells.push_back({p, tau, w, s});
      }
    }
  }
  return cells;
}

namespace {

const char* kMetaHeader = "policy,n_fixed,k,tau_s,w_s,horizon_s,seed,stall_count,placements,repair_placements,reallocations";
const char* kPeerHeader =
    "peer_id,backup_start,backup_complete,min_ttb,n_at_completion,n_final,completion_durability,completion_ettr,"
    "completion_sigma2,completion_stalled,death_time,restore_start,restore_complete,min_ttr,loss,"
    "unfinished_backup,unfinished_restore";

std::string opt17(const std::optional<double>& v) { return v ? g17(*v) : std::string(); }

std::optional<double> parse_opt(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return parse_real(s);
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << content;
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

bool outcome_before(const SimulationOutcome& a, const SimulationOutcome& b) {
  return std::tie(a.policy, a.tau, a.w, a.seed) < std::tie(b.policy, b.tau, b.w, b.seed);
}

std::vector<fs::path> export_all(const std::vector<SimulationOutcome>& outcomes, std::span<const ExportFormat> formats,
                                 const fs::path& dir) {
  const Report report = build_report(outcomes);
  std::vector<fs::path> files;
  for (auto f : formats) {
    auto written = export_report(report, f, dir);
    files.insert(files.end(), written.begin(), written.end());
  }
  return files;
}

}  // namespace

void write_outcome_csv(std::ostream& out, const SimulationOutcome& o) {
  out << kMetaHeader << "\n"
      << to_string(o.policy) << ',' << o.n_fixed << ',' << o.k << ',' << g17(o.tau) << ',' << g17(o.w) << ','
      << g17(o.horizon) << ',' << o.seed << ',' << o.stall_count << ',' << o.placements << ',' << o.repair_placements
      << ',' << o.reallocations << "\n"
      << kPeerHeader << "\n";
  for (const auto& p : o.peers) {
    out << p.id << ',' << g17(p.backup_start) << ',' << opt17(p.backup_complete) << ',' << opt17(p.min_ttb) << ','
        << p.n_at_completion << ',' << p.n_final << ',' << g17(p.completion_durability) << ','
        << g17(p.completion_ettr) << ',' << g17(p.completion_sigma2) << ',' << (p.completion_stalled ? 1 : 0) << ','
        << opt17(p.death_time) << ',' << opt17(p.restore_start) << ',' << opt17(p.restore_complete) << ','
        << g17(p.min_ttr) << ',' << to_string(p.loss) << ',' << (p.unfinished_backup_at_horizon ? 1 : 0) << ','
        << (p.unfinished_restore_at_horizon ? 1 : 0) << "\n";
  }
}

SimulationOutcome read_outcome_csv(std::istream& in) {
  std::string line;
  auto next = [&](const char* what) {
    if (!std::getline(in, line)) throw std::invalid_argument(std::string("outcome file: missing ") + what);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };
  if (next("metadata header") != kMetaHeader) throw std::invalid_argument("outcome file: bad metadata header");
  const auto m = split_row(next("metadata"));
  if (m.size() != 11) throw std::invalid_argument("outcome file: metadata needs 11 fields");
  SimulationOutcome o;
  o.policy = policy_kind_from_string(m[0]);
  o.n_fixed = static_cast<int>(parse_integer(m[1]));
  o.k = static_cast<int>(parse_integer(m[2]));
  o.tau = parse_real(m[3]);
  o.w = parse_real(m[4]);
  o.horizon = parse_real(m[5]);
  o.seed = static_cast<std::uint64_t>(parse_integer(m[6]));
  o.stall_count = static_cast<int>(parse_integer(m[7]));
  o.placements = parse_integer(m[8]);
  o.repair_placements = parse_integer(m[9]);
  o.reallocations = parse_integer(m[10]);
  if (next("peer header") != kPeerHeader) throw std::invalid_argument("outcome file: bad peer header");
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto c = split_row(line);
    if (c.size() != 17) throw std::invalid_argument("outcome file: peer row needs 17 fields: '" + line + "'");
    PeerOutcome p;
    p.id = c[0];
    p.backup_start = parse_real(c[1]);
    p.backup_complete = parse_opt(c[2]);
    p.min_ttb = parse_opt(c[3]);
    p.n_at_completion = static_cast<int>(parse_integer(c[4]));
    p.n_final = static_cast<int>(parse_integer(c[5]));
    p.completion_durability = parse_real(c[6]);
    p.completion_ettr = parse_real(c[7]);
    p.completion_sigma2 = parse_real(c[8]);
    p.completion_stalled = parse_bool(c[9]);
    p.death_time = parse_opt(c[10]);
    p.restore_start = parse_opt(c[11]);
    p.restore_complete = parse_opt(c[12]);
    p.min_ttr = parse_real(c[13]);
    p.loss = loss_category_from_string(c[14]);
    p.unfinished_backup_at_horizon = parse_bool(c[15]);
    p.unfinished_restore_at_horizon = parse_bool(c[16]);
    o.peers.push_back(std::move(p));
  }
  return o;
}

ExperimentResult run_experiment(const ExperimentSpec& spec, int jobs) {
  if (jobs < 1) throw std::invalid_argument("jobs must be >= 1");
  if (spec.policies.empty() || spec.ws.empty() || spec.taus.empty() || spec.seeds.empty()) {
    throw std::invalid_argument("sweep lists and seeds must be non-empty");
  }
  if (spec.formats.empty()) throw std::invalid_argument("at least one output format is required");
  spec.base.validate();

  // Everything that can fail on inputs or outputs happens before the first run.
  const auto traces = load_traces(spec.traces);
  const auto bandwidth = load_bandwidth(spec.traces);
  const bool needs_baseline =
      std::find(spec.policies.begin(), spec.policies.end(), PolicyKind::kBaseline) != spec.policies.end();
  const int n_fixed = needs_baseline ? baseline_n(spec) : 0;
  const fs::path cells_dir = spec.output_dir / "cells";
  std::error_code ec;
  fs::create_directories(cells_dir, ec);
  if (ec) throw std::runtime_error("cannot create " + cells_dir.string() + ": " + ec.message());

  const auto cells = expand_grid(spec);
  ExperimentResult result;
  {
    std::ostringstream manifest;
    manifest << render_config(spec) << "\n[run]\ncreated = " << timestamp() << "\ncells = " << cells.size()
             << "\npeers = " << traces.size() << "\nbaseline_n = " << n_fixed << "\n";
    write_text(spec.output_dir / "manifest.ini", manifest.str());
    result.files.push_back(spec.output_dir / "manifest.ini");
  }

  std::vector<std::vector<PeerProfile>> peers_by_seed;
  std::map<std::uint64_t, std::size_t> seed_index;
  for (auto s : spec.seeds) {
    if (seed_index.count(s)) continue;
    seed_index[s] = peers_by_seed.size();
    peers_by_seed.push_back(build_peers(traces, bandwidth, s, spec.base.capacity, spec.traces.downlink_factor));
  }

  std::vector<SimulationOutcome> outcomes(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex failure_mutex;
  std::exception_ptr failure;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      {
        std::lock_guard lock(failure_mutex);
        if (failure) return;
      }
      try {
        const auto& cell = cells[i];
        PolicyConfig config = spec.base;
        config.tau = cell.tau;
        config.w = cell.w;
        SimulationOptions options;
        options.max_parallel_uploads = spec.max_parallel_uploads;
        options.n_cap_factor = spec.n_cap_factor;
        options.record_event_log = spec.event_log;
        const Policy policy = cell.policy == PolicyKind::kBaseline ? Policy::baseline(n_fixed) : Policy::adaptive();
        auto outcome = run_simulation(config, policy, peers_by_seed[seed_index.at(cell.seed)], cell.seed, options);
        if (spec.event_log) {
          std::ostringstream log;
          write_event_log(log, outcome.event_log);
          write_text(cells_dir / (cell.name() + ".events.log"), log.str());
          outcome.event_log.clear();
          outcome.event_log.shrink_to_fit();
        }
        for (auto& p : outcome.peers) {
          p.n_history.clear();
          p.n_history.shrink_to_fit();
        }
        std::ostringstream csv;
        write_outcome_csv(csv, outcome);
        write_text(cells_dir / (cell.name() + ".csv"), csv.str());
        outcomes[i] = std::move(outcome);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int threads = std::min<int>(jobs, static_cast<int>(cells.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  for (const auto& cell : cells) {
    result.files.push_back(cells_dir / (cell.name() + ".csv"));
    if (spec.event_log) result.files.push_back(cells_dir / (cell.name() + ".events.log"));
  }
  auto aggregates = export_all(outcomes, spec.formats, spec.output_dir);
  result.files.insert(result.files.end(), aggregates.begin(), aggregates.end());
  result.outcomes = std::move(outcomes);
  return result;
}

std::vector<fs::path> report_from_cells(const fs::path& dir, ExportFormat format, const fs::path& out) {
  const fs::path cells_dir = dir / "cells";
  if (!fs::is_directory(cells_dir)) throw std::runtime_error("no cells directory under " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(cells_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  if (files.empty()) throw std::runtime_error("no cell outcomes in " + cells_dir.string());
  std::sort(files.begin(), files.end());
  std::vector<SimulationOutcome> outcomes;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + f.string());
    try {
      outcomes.push_back(read_outcome_csv(in));
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(f.string() + ": " + e.what());
    }
  }
  std::sort(outcomes.begin(), outcomes.end(), outcome_before);
  const ExportFormat formats[] = {format};
  return export_all(outcomes, formats, out);
}

}  // namespace p2pbackup
