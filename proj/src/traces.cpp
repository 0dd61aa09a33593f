#include "p2pbackup/traces.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace p2pbackup {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

struct PendingTrace {
  std::string id;
  std::vector<TraceEvent> events;
  std::optional<long long> last_time;
  PeerState last_kind = PeerState::kDown;
  std::optional<PeerState> first_kind_beyond;  // first event, when every row is past the horizon
};

}  // namespace

std::vector<NamedTrace> parse_traces(std::istream& in, Seconds horizon) {
  if (!(horizon > 0.0)) throw std::invalid_argument("parse_traces: horizon must be > 0");
  std::string line;
  std::size_t row = 0;
  if (!std::getline(in, line)) throw TraceParseError("trace input is empty", "", 0);
  ++row;
  {
    auto header = split_csv(line);
    if (header.size() != 3 || header[0] != "peer_id" || header[1] != "time_s" || header[2] != "event") {
      throw TraceParseError("expected header 'peer_id,time_s,event'", "", row);
    }
  }

  std::vector<PendingTrace> pending;
  std::map<std::string, std::size_t, std::less<>> index;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    auto cells = split_csv(line);
    const std::string id = cells.empty() ? std::string() : std::string(cells[0]);
    auto fail = [&](const std::string& what) -> TraceParseError {
      std::ostringstream msg;
      msg << "row " << row << " (peer '" << id << "'): " << what;
      return TraceParseError(msg.str(), id, row);
    };
    if (cells.size() != 3 || id.empty()) throw fail("expected 3 fields");

    long long t = 0;
    auto [ptr, ec] = std::from_chars(cells[1].data(), cells[1].data() + cells[1].size(), t);
    if (ec != std::errc() || ptr != cells[1].data() + cells[1].size() || t < 0) {
      throw fail("time_s must be a non-negative integer");
    }
    PeerState kind;
    if (cells[2] == "up") {
      kind = PeerState::kUp;
    } else if (cells[2] == "down") {
      kind = PeerState::kDown;
    } else {
      throw fail("unknown event '" + std::string(cells[2]) + "'");
    }

    auto [it, inserted] = index.try_emplace(id, pending.size());
    if (inserted) pending.push_back({id, {}, std::nullopt, PeerState::kDown, std::nullopt});
    auto& trace = pending[it->second];

    // Ordering is checked against every row, including the truncated ones.
    if (trace.last_time) {
      if (t <= *trace.last_time) throw fail("time not strictly increasing");
      if (kind == trace.last_kind) throw fail("event does not alternate");
    }
    trace.last_time = t;
    trace.last_kind = kind;
    if (static_cast<Seconds>(t) > horizon) {
      if (trace.events.empty() && !trace.first_kind_beyond) trace.first_kind_beyond = kind;
      continue;
    }
    trace.events.push_back({static_cast<Seconds>(t), kind});
  }

  std::vector<NamedTrace> out;
  out.reserve(pending.size());
  for (auto& p : pending) {
    if (p.events.empty() && p.first_kind_beyond) {
      // Only the initial state is known; pin it with an event at the horizon.
      p.events.push_back({horizon, *p.first_kind_beyond});
    }
    out.push_back({p.id, AvailabilityTrace(std::move(p.events), horizon)});
  }
  return out;
}

void write_traces(std::ostream& out, std::span<const NamedTrace> traces) {
  out << "peer_id,time_s,event\n";
  for (const auto& t : traces) {
    for (const auto& e : t.trace.events()) {
      out << t.peer_id << ',' << static_cast<long long>(std::llround(e.time)) << ','
          << (e.kind == PeerState::kUp ? "up" : "down") << '\n';
    }
  }
}

std::vector<NamedTrace> filter_min_availability(std::vector<NamedTrace> traces, double min_fraction) {
  if (!(min_fraction >= 0.0 && min_fraction <= 1.0)) {
    throw std::invalid_argument("min_fraction must lie in [0,1]");
  }
  std::erase_if(traces, [&](const NamedTrace& t) { return t.trace.availability() < min_fraction; });
  return traces;
}

std::vector<std::string> SyntheticTraceParams::violations() const {
  std::vector<std::string> out;
  if (peer_count < 1) out.push_back("peer_count: must be >= 1");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) out.push_back("horizon: must be finite and > 0");
  if (!(mean_session > 0.0)) out.push_back("mean_session: must be > 0");
  if (!(beta_a > 0.0)) out.push_back("beta_a: must be > 0");
  if (!(beta_b > 0.0)) out.push_back("beta_b: must be > 0");
  if (!(min_target >= 0.0 && min_target < 1.0)) out.push_back("min_target: must lie in [0,1)");
  if (!(always_on_fraction >= 0.0 && always_on_fraction <= 1.0)) {
    out.push_back("always_on_fraction: must lie in [0,1]");
  }
  for (double t : targets) {
    if (!(t > 0.0 && t <= 1.0)) {
      out.push_back("targets: every availability target must lie in (0,1]");
      break;
    }
  }
  if (!targets.empty() && static_cast<int>(targets.size()) != peer_count) {
    out.push_back("targets: need exactly peer_count entries");
  }
  return out;
}

std::vector<double> draw_availability_targets(const SyntheticTraceParams& params) {
  if (!params.targets.empty()) return params.targets;
  std::mt19937_64 rng(params.seed);
  std::gamma_distribution<double> ga(params.beta_a, 1.0);
  std::gamma_distribution<double> gb(params.beta_b, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> targets;
  targets.reserve(static_cast<std::size_t>(params.peer_count));
  for (int i = 0; i < params.peer_count; ++i) {
    if (unit(rng) < params.always_on_fraction) {
      targets.push_back(0.9 + 0.1 * unit(rng));
      continue;
    }
    double x = 0.0;
    do {
      const double a = ga(rng);
      const double b = gb(rng);
      x = a / (a + b);
    } while (x < params.min_target || !(x > 0.0));
    targets.push_back(x);
  }
  return targets;
}

std::vector<NamedTrace> generate_synthetic_traces(const SyntheticTraceParams& params) {
  if (auto v = params.violations(); !v.empty()) {
    throw std::invalid_argument("invalid synthetic trace parameters: " + v.front());
  }
  const auto targets = draw_availability_targets(params);
  const Seconds horizon = std::floor(params.horizon);
  std::vector<NamedTrace> out;
  out.reserve(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "peer%04zu", i);
    const double a = targets[i];
    std::vector<TraceEvent> events;
    if (a >= 1.0) {
      events.push_back({0.0, PeerState::kUp});
      out.push_back({name, AvailabilityTrace(std::move(events), horizon)});
      continue;
    }
    std::seed_seq seq{params.seed, static_cast<std::uint64_t>(i) + 1};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::exponential_distribution<double> on(1.0 / params.mean_session);
    std::exponential_distribution<double> off(a / (params.mean_session * (1.0 - a)));
    bool online = unit(rng) < a;
    Seconds t = 0.0;
    while (t <= horizon) {
      events.push_back({t, online ? PeerState::kUp : PeerState::kDown});
      const Seconds length = std::max(1.0, std::round(online ? on(rng) : off(rng)));
      t += length;
      online = !online;
    }
    out.push_back({name, AvailabilityTrace(std::move(events), horizon)});
  }
  return out;
}

BandwidthDistribution::BandwidthDistribution(std::vector<BytesPerSecond> samples) : samples_(std::move(samples)) {
  if (samples_.empty()) throw std::invalid_argument("bandwidth distribution needs at least one sample");
  for (double s : samples_) {
    if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("bandwidth samples must be finite and > 0");
  }
}

BandwidthDistribution BandwidthDistribution::parse(std::istream& in) {
  std::vector<BytesPerSecond> samples;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    auto s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw std::invalid_argument("bandwidth line " + std::to_string(row) + ": not a number");
    }
    samples.push_back(v);
  }
  return BandwidthDistribution(std::move(samples));
}

void BandwidthDistribution::write(std::ostream& out) const {
  char buf[64];
  for (double s : samples_) {
    std::snprintf(buf, sizeof buf, "%.17g\n", s);
    out << buf;
  }
}

BandwidthDistribution BandwidthDistribution::lognormal(BytesPerSecond median, BytesPerSecond mean, std::size_t count,
                                                       std::uint64_t seed) {
  if (!(median > 0.0) || !(mean > median)) throw std::invalid_argument("lognormal needs mean > median > 0");
  if (count == 0) throw std::invalid_argument("lognormal needs count >= 1");
  const double mu = std::log(median);
  const double sigma = std::sqrt(2.0 * std::log(mean / median));
  std::mt19937_64 rng(seed);
  std::lognormal_distribution<double> dist(mu, sigma);
  std::vector<BytesPerSecond> samples(count);
  for (auto& s : samples) s = dist(rng);
  return BandwidthDistribution(std::move(samples));
}

BytesPerSecond BandwidthDistribution::sample(std::mt19937_64& rng) const {
  std::uniform_int_distribution<std::size_t> pick(0, samples_.size() - 1);
  return samples_[pick(rng)];
}

LinkCapacity sample_peer_bandwidth(const BandwidthDistribution& bandwidth, std::mt19937_64& rng,
                                   double downlink_factor) {
  if (!(downlink_factor > 0.0)) throw std::invalid_argument("downlink factor must be > 0");
  const BytesPerSecond up = bandwidth.sample(rng);
  return {up, downlink_factor * up};
}

BandwidthDistribution default_bandwidth_distribution() {
  return BandwidthDistribution::lognormal(77.0 * kKiB, 428.0 * kKiB, 10000, 20100101);
}

std::vector<PeerProfile> build_peers(std::span<const NamedTrace> traces, const BandwidthDistribution& bandwidth,
                                     std::uint64_t seed, Bytes capacity, double downlink_factor) {
  std::seed_seq seq{seed, std::uint64_t{0xBA2D}};
  std::mt19937_64 rng(seq);
  std::vector<PeerProfile> peers;
  peers.reserve(traces.size());
  for (const auto& t : traces) {
    const auto link = sample_peer_bandwidth(bandwidth, rng, downlink_factor);
    peers.push_back(make_peer_profile(t.peer_id, link.uplink, link.downlink, t.trace, capacity));
  }
  return peers;
}

}  // namespace p2pbackup
