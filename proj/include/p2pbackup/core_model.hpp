#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace p2pbackup {

// All durations are seconds, all sizes bytes. GB/MB/KB are binary units.
using Seconds = double;
using Bytes = double;
using BytesPerSecond = double;

inline constexpr Seconds kMinute = 60.0;
inline constexpr Seconds kHour = 3600.0;
inline constexpr Seconds kDay = 86400.0;
inline constexpr Seconds kWeek = 7.0 * kDay;
inline constexpr Seconds kYear = 365.0 * kDay;
inline constexpr Seconds kForever = std::numeric_limits<double>::infinity();

inline constexpr Bytes kKiB = 1024.0;
inline constexpr Bytes kMiB = 1024.0 * kKiB;
inline constexpr Bytes kGiB = 1024.0 * kMiB;

/// Parses "90d", "2w", "1.5h", "3600" (plain seconds) or "inf".
/// Units: s m h d w y (y = 365 d).
Seconds parse_duration(std::string_view text);

/// Largest unit that divides the value exactly: "1y", "90d", "2w", "0s", "inf".
std::string duration_label(Seconds value);

/// Parses "10GiB", "160MiB", "512" (bytes). KB/MB/GB are read as binary units.
Bytes parse_size(std::string_view text);

/// Raised when a holder list is too short to evaluate the restore-time estimate.
class InsufficientHolders : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when no fragment count up to the search bound reaches the target.
class UnreachableTarget : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PeerState : std::uint8_t { kDown, kUp };

struct TraceEvent {
  Seconds time = 0.0;
  PeerState kind = PeerState::kUp;

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

/// Up/down history of one peer over [0, horizon].
///
/// Times are strictly increasing and kinds alternate. Before the first event
/// the peer is in the opposite state of that event. A trace without events is
/// offline for the whole horizon.
class AvailabilityTrace {
 public:
  AvailabilityTrace() = default;
  AvailabilityTrace(std::vector<TraceEvent> events, Seconds horizon);

  static AvailabilityTrace always_online(Seconds horizon);

  const std::vector<TraceEvent>& events() const { return events_; }
  Seconds horizon() const { return horizon_; }

  bool initially_online() const;
  bool online_at(Seconds t) const;

  /// Online time within [from, to], clipped to [0, horizon].
  Seconds online_time(Seconds from, Seconds to) const;

  /// Fraction of the horizon spent online.
  double availability() const;

  /// Earliest instant at which `needed` seconds of online time have been
  /// accumulated since `start`. Empty when the horizon comes first.
  std::optional<Seconds> time_to_accumulate(Seconds start, Seconds needed) const;

  friend bool operator==(const AvailabilityTrace&, const AvailabilityTrace&) = default;

 private:
  std::vector<TraceEvent> events_;
  Seconds horizon_ = 0.0;
};

struct PeerProfile {
  std::string id;
  BytesPerSecond uplink = 0.0;
  BytesPerSecond downlink = 0.0;
  AvailabilityTrace trace;
  double availability = 0.0;
  Bytes capacity = 0.0;
};

/// Builds a profile and checks its invariants; availability is measured from the trace.
PeerProfile make_peer_profile(std::string id, BytesPerSecond uplink, BytesPerSecond downlink,
                              AvailabilityTrace trace, Bytes capacity);

/// k = ceil(object_size / fragment_size).
int derive_k(Bytes object_size, Bytes fragment_size);

/// r = n / k.
double redundancy_factor(int n, int k);

struct PolicyConfig {
  Bytes object_size = 10.0 * kGiB;
  Bytes fragment_size = 160.0 * kMiB;
  Seconds tau = kYear;
  Seconds w = 2.0 * kWeek;
  double sigma1 = 0.9999;
  double alpha = 2.0;
  Seconds sigma2_floor = kDay;
  double baseline_target_availability = 0.99;
  double baseline_mean_availability = 0.36;
  Bytes capacity = 50.0 * kGiB;
  // Holder offline timeout. Unset means max(w, timeout_floor).
  std::optional<Seconds> maintenance_timeout;
  Seconds timeout_floor = kDay;

  int k() const { return derive_k(object_size, fragment_size); }
  Seconds effective_timeout() const;

  /// One message per violated invariant, prefixed with the field name.
  std::vector<std::string> violations() const;
  void validate() const;
};

struct HolderEntry {
  std::size_t peer = 0;
  int fragments = 1;
};

/// Where one owner's fragments live. n is always derived from the holders.
class PlacementState {
 public:
  PlacementState() = default;
  explicit PlacementState(std::size_t owner) : owner_(owner) {}

  std::size_t owner() const { return owner_; }
  const std::vector<HolderEntry>& holders() const { return holders_; }
  int n() const;
  double redundancy(int k) const { return redundancy_factor(n(), k); }
  bool holds(std::size_t peer) const;

  void add_fragment(std::size_t peer);
  /// Returns the number of fragments removed.
  int remove_holder(std::size_t peer);

  bool backup_complete = false;
  std::optional<Seconds> completed_at;

 private:
  std::size_t owner_ = 0;
  std::vector<HolderEntry> holders_;
};

}  // namespace p2pbackup
