#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "p2pbackup/core_model.hpp"

namespace p2pbackup {

class TraceParseError : public std::runtime_error {
 public:
  TraceParseError(const std::string& message, std::string peer_id, std::size_t row)
      : std::runtime_error(message), peer_id_(std::move(peer_id)), row_(row) {}
  const std::string& peer_id() const { return peer_id_; }
  /// 1-based line number in the input, header included.
  std::size_t row() const { return row_; }

 private:
  std::string peer_id_;
  std::size_t row_;
};

struct NamedTrace {
  std::string peer_id;
  AvailabilityTrace trace;

  friend bool operator==(const NamedTrace&, const NamedTrace&) = default;
};

/// Reads `peer_id,time_s,event` CSV. Peers come out in order of first
/// appearance. Rows past the horizon are dropped.
std::vector<NamedTrace> parse_traces(std::istream& in, Seconds horizon);
void write_traces(std::ostream& out, std::span<const NamedTrace> traces);

/// Keeps traces whose availability is at least `min_fraction`, in order.
std::vector<NamedTrace> filter_min_availability(std::vector<NamedTrace> traces, double min_fraction = 4.0 / 24.0);

struct SyntheticTraceParams {
  int peer_count = 300;
  Seconds horizon = 90.0 * kDay;
  Seconds mean_session = 8.0 * kHour;  // mean ON period
  double beta_a = 1.5;
  double beta_b = 5.5;
  double min_target = 0.18;          // Beta draws below this are redrawn
  double always_on_fraction = 0.05;  // share of peers with target in [0.9, 1.0)
  std::vector<double> targets;       // explicit per-peer targets; overrides the Beta draw
  std::uint64_t seed = 1;

  std::vector<std::string> violations() const;
};

/// Alternating exponential ON/OFF sessions per peer. Times are whole seconds.
std::vector<NamedTrace> generate_synthetic_traces(const SyntheticTraceParams& params);

/// Availability target drawn per peer, in the order the generator uses them.
std::vector<double> draw_availability_targets(const SyntheticTraceParams& params);

/// Uplink samples (bytes/s), drawn with replacement.
class BandwidthDistribution {
 public:
  explicit BandwidthDistribution(std::vector<BytesPerSecond> samples);

  /// One value per line; blank lines and lines starting with '#' are skipped.
  static BandwidthDistribution parse(std::istream& in);
  void write(std::ostream& out) const;

  /// Log-normal with the given median and mean (mean > median).
  static BandwidthDistribution lognormal(BytesPerSecond median, BytesPerSecond mean, std::size_t count,
                                         std::uint64_t seed);

  const std::vector<BytesPerSecond>& samples() const { return samples_; }
  BytesPerSecond sample(std::mt19937_64& rng) const;

 private:
  std::vector<BytesPerSecond> samples_;
};

struct LinkCapacity {
  BytesPerSecond uplink = 0.0;
  BytesPerSecond downlink = 0.0;
};

/// Uplink drawn from `bandwidth`, downlink = factor * uplink.
LinkCapacity sample_peer_bandwidth(const BandwidthDistribution& bandwidth, std::mt19937_64& rng,
                                   double downlink_factor = 4.0);

/// Default bandwidth population: median 77 KiB/s, mean 428 KiB/s.
BandwidthDistribution default_bandwidth_distribution();

/// One profile per trace; uplink drawn from `bandwidth`, downlink = factor * uplink.
std::vector<PeerProfile> build_peers(std::span<const NamedTrace> traces, const BandwidthDistribution& bandwidth,
                                     std::uint64_t seed, Bytes capacity, double downlink_factor = 4.0);

}  // namespace p2pbackup
