#pragma once

#include <span>

#include "p2pbackup/core_model.hpp"

namespace p2pbackup {

struct DurabilityAssessment {
  int n = 0;
  int k = 0;
  double p_survive = 1.0;
  double durability = 0.0;
  Seconds time_window = 0.0;
};

/// Expected serving rate of one stored fragment. A peer that holds m
/// fragments contributes m entries.
struct HolderRate {
  std::size_t peer = 0;
  BytesPerSecond expected_upload_rate = 0.0;
};

/// exp(-t / tau). An infinite tau means nobody ever dies.
double survival_probability(Seconds t, Seconds tau);

/// P[Binomial(n, p) >= k], summed in log space over the smaller tail.
double durability(int n, int k, double p_survive);

/// Natural log of C(n, i) p^i (1-p)^(n-i).
double log_binomial_pmf(int n, int i, double p);

BytesPerSecond expected_upload_rate(BytesPerSecond uplink, double availability);

/// max(o / D0, o / (k * mu_k)), with mu_k the k-th largest expected upload rate.
Seconds estimate_ttr(Bytes object_size, BytesPerSecond owner_downlink, int k, std::span<const HolderRate> holders);

/// max(floor, alpha * min_ttr).
Seconds sigma2(Seconds min_ttr, double alpha, Seconds floor);

bool stop_condition(const DurabilityAssessment& assessment, Seconds ettr, double sigma1, Seconds sigma2_value);

/// Smallest n >= k with durability(n, k, mean_availability) >= target.
/// Throws UnreachableTarget when no n <= n_max qualifies. n_max <= 0 means 10 * k.
int baseline_fragment_count(int k, double mean_availability, double target, int n_max = 0);

struct AdaptiveResult {
  DurabilityAssessment assessment;
  Seconds ettr = 0.0;
};

/// Durability over the window w + eTTR, with n taken as the holder-entry count.
AdaptiveResult adaptive_assessment(const PolicyConfig& config, std::span<const HolderRate> holders,
                                   BytesPerSecond owner_downlink);

}  // namespace p2pbackup
