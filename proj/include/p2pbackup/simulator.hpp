#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "p2pbackup/bandwidth.hpp"
#include "p2pbackup/core_model.hpp"
#include "p2pbackup/redundancy_policy.hpp"

namespace p2pbackup {

enum class PolicyKind : std::uint8_t { kAdaptive, kBaseline };

struct Policy {
  PolicyKind kind = PolicyKind::kAdaptive;
  int n_fixed = 0;  // baseline only

  static Policy adaptive() { return {PolicyKind::kAdaptive, 0}; }
  static Policy baseline(int n) { return {PolicyKind::kBaseline, n}; }
};

std::string to_string(PolicyKind kind);
PolicyKind policy_kind_from_string(const std::string& name);

// Declaration order is the tie-break order at equal timestamps.
enum class EventKind : std::uint8_t {
  kDeath,
  kPeerDown,
  kPeerUp,
  kTransferComplete,
  kTimeoutExpired,
  kHorizonEnd,
};

std::string to_string(EventKind kind);

struct SimEvent {
  Seconds time = 0.0;
  EventKind kind = EventKind::kHorizonEnd;
  std::size_t subject = 0;
  std::uint64_t tag = 0;

  friend auto operator<=>(const SimEvent&, const SimEvent&) = default;
};

enum class Phase : std::uint8_t { kBackingUp, kMaintaining, kIdle, kRestoring, kLost };

enum class LossCategory : std::uint8_t { kNone, kIncompleteBackup, kIncompleteUnavoidable, kFailedRestore };

std::string to_string(LossCategory category);
LossCategory loss_category_from_string(const std::string& name);

inline bool is_incomplete_backup(LossCategory c) {
  return c == LossCategory::kIncompleteBackup || c == LossCategory::kIncompleteUnavoidable;
}

struct PeerOutcome {
  std::string id;
  Seconds backup_start = 0.0;
  std::optional<Seconds> backup_complete;
  std::optional<Seconds> min_ttb;  // empty: not achievable within the horizon
  int n_at_completion = 0;
  int n_final = 0;
  std::vector<std::pair<Seconds, int>> n_history;
  // Policy state when the backup was declared complete.
  double completion_durability = 0.0;
  Seconds completion_ettr = 0.0;
  Seconds completion_sigma2 = 0.0;
  bool completion_stalled = false;

  std::optional<Seconds> death_time;
  std::optional<Seconds> restore_start;
  std::optional<Seconds> restore_complete;
  Seconds min_ttr = 0.0;
  LossCategory loss = LossCategory::kNone;
  bool unfinished_backup_at_horizon = false;
  bool unfinished_restore_at_horizon = false;

  std::optional<Seconds> ttb() const;
  std::optional<Seconds> ttr() const;
};

struct SimulationOutcome {
  PolicyKind policy = PolicyKind::kAdaptive;
  int n_fixed = 0;
  int k = 0;
  Seconds tau = 0.0;
  Seconds w = 0.0;
  Seconds horizon = 0.0;
  std::uint64_t seed = 0;
  std::vector<PeerOutcome> peers;
  int stall_count = 0;
  std::int64_t placements = 0;
  std::int64_t repair_placements = 0;
  std::int64_t reallocations = 0;
  std::vector<std::string> event_log;

  /// Mean n/k at completion over peers that completed their backup.
  double mean_redundancy() const;
};

/// Rates handed to the audit hook after every reallocation.
struct AllocationAudit {
  Seconds time = 0.0;
  std::span<const FlowDemand> flows;
  std::span<const BytesPerSecond> rates;
  std::span<const BytesPerSecond> uplink;
  std::span<const BytesPerSecond> downlink;
  std::span<const char> can_send;     // per peer: alive and online
  std::span<const char> can_receive;  // per peer: alive and online, or restoring
};

struct SimulationOptions {
  int max_parallel_uploads = 4;
  int n_cap_factor = 10;  // adaptive stall cap is n_cap_factor * k
  bool record_event_log = false;
  std::function<void(const AllocationAudit&)> audit;
};

/// Wall-clock time from `start` until the peer has been online o / u_i seconds.
std::optional<Seconds> min_ttb(const PeerProfile& peer, Seconds start, Bytes object_size);
/// o / d_i: the restoring peer stays online.
Seconds min_ttr(const PeerProfile& peer, Bytes object_size);

/// Uniform pick among `candidates`, never the owner. Empty when nothing is left.
std::optional<std::size_t> select_storage_target(std::mt19937_64& rng, std::size_t owner,
                                                 std::span<const std::size_t> candidates);

/// Independent exponential lifetimes with mean tau; an infinite tau yields kForever.
std::vector<Seconds> draw_death_times(std::size_t peers, Seconds tau, std::mt19937_64& rng);

/// Runs one trace-driven simulation. Deterministic in (config, policy, peers, seed).
SimulationOutcome run_simulation(const PolicyConfig& config, Policy policy, std::span<const PeerProfile> peers,
                                 std::uint64_t seed, const SimulationOptions& options = {});

void write_event_log(std::ostream& out, std::span<const std::string> log);

}  // namespace p2pbackup
