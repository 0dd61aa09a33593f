#include "p2pbackup/core_model.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace p2pbackup {

namespace {

// Splits "12.5GiB" into 12.5 and "GiB"; the number must be finite and >= 0.
std::pair<double, std::string_view> split_quantity(std::string_view text, const char* what) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || !std::isfinite(value) || value < 0.0) {
    throw std::invalid_argument(std::string("bad ") + what + " '" + std::string(text) + "'");
  }
  std::string_view unit(ptr, static_cast<std::size_t>(text.data() + text.size() - ptr));
  while (!unit.empty() && unit.front() == ' ') unit.remove_prefix(1);
  return {value, unit};
}

}  // namespace

Seconds parse_duration(std::string_view text) {
  std::string lowered;
  for (char c : text) lowered += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lowered == "inf" || lowered == "infinity") return kForever;
  auto [value, unit] = split_quantity(text, "duration");
  if (unit.empty() || unit == "s") return value;
  if (unit == "m") return value * kMinute;
  if (unit == "h") return value * kHour;
  if (unit == "d") return value * kDay;
  if (unit == "w") return value * kWeek;
  if (unit == "y") return value * kYear;
  throw std::invalid_argument("unknown duration unit '" + std::string(unit) + "' (use s, m, h, d, w, y)");
}

std::string duration_label(Seconds value) {
  if (std::isinf(value) && value > 0) return "inf";
  if (value == 0.0) return "0s";
  static constexpr std::pair<Seconds, const char*> units[] = {
      {kYear, "y"}, {kWeek, "w"}, {kDay, "d"}, {kHour, "h"}, {kMinute, "m"}};
  for (auto [size, suffix] : units) {
    const double count = value / size;
    if (count == std::floor(count)) return std::to_string(static_cast<long long>(count)) + suffix;
  }
  char buf[40];
  std::snprintf(buf, sizeof buf, "%gs", value);
  return buf;
}

Bytes parse_size(std::string_view text) {
  auto [value, unit] = split_quantity(text, "size");
  if (unit.empty() || unit == "B") return value;
  if (unit == "KiB" || unit == "KB") return value * kKiB;
  if (unit == "MiB" || unit == "MB") return value * kMiB;
  if (unit == "GiB" || unit == "GB") return value * kGiB;
  throw std::invalid_argument("unknown size unit '" + std::string(unit) + "' (use B, KiB, MiB, GiB)");
}

AvailabilityTrace::AvailabilityTrace(std::vector<TraceEvent> events, Seconds horizon)
    : events_(std::move(events)), horizon_(horizon) {
  if (!std::isfinite(horizon_) || horizon_ <= 0.0) {
    throw std::invalid_argument("trace horizon must be finite and > 0");
  }
  for (std::size_t i = 0; i < events_.size(); ++i) {
    const auto& e = events_[i];
    if (!std::isfinite(e.time) || e.time < 0.0 || e.time > horizon_) {
      throw std::invalid_argument("trace event " + std::to_string(i) + " outside [0, horizon]");
    }
    if (i > 0) {
      if (e.time <= events_[i - 1].time) {
        throw std::invalid_argument("trace event " + std::to_string(i) + " not strictly after its predecessor");
      }
      if (e.kind == events_[i - 1].kind) {
        throw std::invalid_argument("trace event " + std::to_string(i) + " does not alternate");
      }
    }
  }
}

AvailabilityTrace AvailabilityTrace::always_online(Seconds horizon) {
  return AvailabilityTrace({{0.0, PeerState::kUp}}, horizon);
}

bool AvailabilityTrace::initially_online() const {
  return !events_.empty() && events_.front().kind == PeerState::kDown;
}

bool AvailabilityTrace::online_at(Seconds t) const {
  auto it = std::upper_bound(events_.begin(), events_.end(), t,
                             [](Seconds v, const TraceEvent& e) { return v < e.time; });
  if (it == events_.begin()) return initially_online();
  return std::prev(it)->kind == PeerState::kUp;
}

Seconds AvailabilityTrace::online_time(Seconds from, Seconds to) const {
  from = std::clamp(from, 0.0, horizon_);
  to = std::clamp(to, 0.0, horizon_);
  if (to <= from) return 0.0;
  Seconds total = 0.0;
  bool online = initially_online();
  Seconds cursor = 0.0;
  for (const auto& e : events_) {
    if (online) total += std::max(0.0, std::min(e.time, to) - std::max(cursor, from));
    cursor = e.time;
    online = e.kind == PeerState::kUp;
    if (cursor >= to) return total;
  }
  if (online) total += std::max(0.0, to - std::max(cursor, from));
  return total;
}

double AvailabilityTrace::availability() const {
  if (horizon_ <= 0.0) return 0.0;
  return online_time(0.0, horizon_) / horizon_;
}

std::optional<Seconds> AvailabilityTrace::time_to_accumulate(Seconds start, Seconds needed) const {
  if (needed <= 0.0) return start;
  Seconds remaining = needed;
  // Walk the online intervals that intersect [start, horizon].
  bool online = initially_online();
  Seconds interval_start = 0.0;
  auto consume = [&](Seconds lo, Seconds hi) -> std::optional<Seconds> {
    lo = std::max(lo, start);
    if (hi <= lo) return std::nullopt;
    if (hi - lo >= remaining) return lo + remaining;
    remaining -= hi - lo;
    return std::nullopt;
  };
  for (const auto& e : events_) {
    if (online) {
      if (auto done = consume(interval_start, e.time)) return done;
    }
    interval_start = e.time;
    online = e.kind == PeerState::kUp;
  }
  if (online) {
    if (auto done = consume(interval_start, horizon_)) return done;
  }
  return std::nullopt;
}

PeerProfile make_peer_profile(std::string id, BytesPerSecond uplink, BytesPerSecond downlink,
                              AvailabilityTrace trace, Bytes capacity) {
  if (!(uplink > 0.0) || !std::isfinite(uplink)) throw std::invalid_argument("peer " + id + ": uplink must be > 0");
  if (!(downlink > 0.0) || !std::isfinite(downlink)) throw std::invalid_argument("peer " + id + ": downlink must be > 0");
  if (!(capacity >= 0.0)) throw std::invalid_argument("peer " + id + ": capacity must be >= 0");
  const double a = trace.availability();
  if (!(a > 0.0)) throw std::invalid_argument("peer " + id + ": never online within the horizon");
  return PeerProfile{std::move(id), uplink, downlink, std::move(trace), a, capacity};
}

int derive_k(Bytes object_size, Bytes fragment_size) {
  if (!(object_size > 0.0) || !(fragment_size > 0.0)) {
    throw std::invalid_argument("object and fragment sizes must be > 0");
  }
  return static_cast<int>(std::ceil(object_size / fragment_size));
}

double redundancy_factor(int n, int k) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (n < k) throw std::invalid_argument("n must be >= k");
  return static_cast<double>(n) / static_cast<double>(k);
}

Seconds PolicyConfig::effective_timeout() const {
  return maintenance_timeout.value_or(std::max(w, timeout_floor));
}

std::vector<std::string> PolicyConfig::violations() const {
  std::vector<std::string> out;
  auto positive = [&](const char* name, double v) {
    if (!(v > 0.0) || !std::isfinite(v)) out.push_back(std::string(name) + ": must be finite and > 0");
  };
  positive("object_size", object_size);
  positive("fragment_size", fragment_size);
  if (!(tau > 0.0)) out.push_back("tau: must be > 0");
  if (!(w >= 0.0) || !std::isfinite(w)) out.push_back("w: must be finite and >= 0");
  if (!(sigma1 > 0.0 && sigma1 < 1.0)) out.push_back("sigma1: must lie in (0,1)");
  if (!(alpha >= 1.0) || !std::isfinite(alpha)) out.push_back("alpha: must be >= 1");
  if (!(sigma2_floor >= 0.0) || !std::isfinite(sigma2_floor)) out.push_back("sigma2_floor: must be >= 0");
  if (!(baseline_target_availability > 0.0 && baseline_target_availability < 1.0)) {
    out.push_back("baseline_target: must lie in (0,1)");
  }
  if (!(baseline_mean_availability > 0.0 && baseline_mean_availability < 1.0)) {
    out.push_back("baseline_availability: must lie in (0,1)");
  }
  if (!(capacity >= 0.0) || !std::isfinite(capacity)) out.push_back("capacity: must be finite and >= 0");
  if (maintenance_timeout && !(*maintenance_timeout >= 0.0)) out.push_back("maintenance_timeout: must be >= 0");
  if (!(timeout_floor >= 0.0)) out.push_back("timeout_floor: must be >= 0");
  return out;
}

void PolicyConfig::validate() const {
  auto v = violations();
  if (v.empty()) return;
  std::ostringstream msg;
  msg << "invalid policy configuration:";
  for (const auto& s : v) msg << "\n  " << s;
  throw std::invalid_argument(msg.str());
}

int PlacementState::n() const {
  int total = 0;
  for (const auto& h : holders_) total += h.fragments;
  return total;
}

bool PlacementState::holds(std::size_t peer) const {
  return std::any_of(holders_.begin(), holders_.end(), [&](const HolderEntry& h) { return h.peer == peer; });
}

void PlacementState::add_fragment(std::size_t peer) {
  if (peer == owner_) throw std::invalid_argument("owner cannot hold its own fragments");
  for (auto& h : holders_) {
    if (h.peer == peer) {
      ++h.fragments;
      return;
    }
  }
  holders_.push_back({peer, 1});
}

int PlacementState::remove_holder(std::size_t peer) {
  auto it = std::find_if(holders_.begin(), holders_.end(), [&](const HolderEntry& h) { return h.peer == peer; });
  if (it == holders_.end()) return 0;
  const int removed = it->fragments;
  holders_.erase(it);
  return removed;
}

}  // namespace p2pbackup
