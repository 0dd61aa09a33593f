#include "p2pbackup/redundancy_policy.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace p2pbackup {

double survival_probability(Seconds t, Seconds tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be > 0");
  if (!(t >= 0.0)) throw std::invalid_argument("t must be >= 0");
  if (std::isinf(tau)) return 1.0;
  return std::exp(-t / tau);
}

double log_binomial_pmf(int n, int i, double p) {
  const double log_coeff = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0);
  return log_coeff + i * std::log(p) + (n - i) * std::log1p(-p);
}

namespace {

// log(sum exp(terms)), terms non-empty.
double log_sum_exp(const std::vector<double>& terms) {
  const double top = *std::max_element(terms.begin(), terms.end());
  if (std::isinf(top)) return top;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - top);
  return top + std::log(acc);
}

}  // namespace

double durability(int n, int k, double p) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (n < k) throw std::invalid_argument("durability: n must be >= k");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("durability: p must lie in [0,1]");
  if (p == 0.0) return 0.0;
  if (p == 1.0) return 1.0;

  std::vector<double> terms;
  if (static_cast<double>(k) > n * p) {
    // Upper tail is the small one: sum it directly.
    terms.reserve(static_cast<std::size_t>(n - k + 1));
    for (int i = k; i <= n; ++i) terms.push_back(log_binomial_pmf(n, i, p));
    return std::min(1.0, std::exp(log_sum_exp(terms)));
  }
  terms.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) terms.push_back(log_binomial_pmf(n, i, p));
  return std::clamp(1.0 - std::exp(log_sum_exp(terms)), 0.0, 1.0);
}

BytesPerSecond expected_upload_rate(BytesPerSecond uplink, double availability) {
  if (!(availability >= 0.0 && availability <= 1.0)) {
    throw std::invalid_argument("availability must lie in [0,1]");
  }
  return uplink * availability;
}

Seconds estimate_ttr(Bytes object_size, BytesPerSecond owner_downlink, int k, std::span<const HolderRate> holders) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (holders.size() < static_cast<std::size_t>(k)) {
    throw InsufficientHolders("estimate_ttr: " + std::to_string(holders.size()) + " holder entries for k=" +
                              std::to_string(k));
  }
  std::vector<BytesPerSecond> rates;
  rates.reserve(holders.size());
  for (const auto& h : holders) rates.push_back(h.expected_upload_rate);
  auto kth = rates.begin() + (k - 1);
  std::nth_element(rates.begin(), kth, rates.end(), std::greater<>());
  const BytesPerSecond mu_k = *kth;
  const Seconds download_bound = object_size / owner_downlink;
  const Seconds holder_bound = mu_k > 0.0 ? object_size / (k * mu_k) : kForever;
  return std::max(download_bound, holder_bound);
}

Seconds sigma2(Seconds min_ttr, double alpha, Seconds floor) { return std::max(floor, alpha * min_ttr); }

bool stop_condition(const DurabilityAssessment& assessment, Seconds ettr, double sigma1, Seconds sigma2_value) {
  return assessment.durability >= sigma1 && ettr <= sigma2_value;
}

int baseline_fragment_count(int k, double mean_availability, double target, int n_max) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (!(mean_availability > 0.0 && mean_availability < 1.0)) {
    throw std::invalid_argument("mean availability must lie in (0,1)");
  }
  if (!(target > 0.0 && target < 1.0)) throw std::invalid_argument("target must lie in (0,1)");
  if (n_max <= 0) n_max = 10 * k;
  for (int n = k; n <= n_max; ++n) {
    if (durability(n, k, mean_availability) >= target) return n;
  }
  throw UnreachableTarget("no n <= " + std::to_string(n_max) + " reaches availability target");
}

AdaptiveResult adaptive_assessment(const PolicyConfig& config, std::span<const HolderRate> holders,
                                   BytesPerSecond owner_downlink) {
  const int k = config.k();
  const Seconds ettr = estimate_ttr(config.object_size, owner_downlink, k, holders);
  AdaptiveResult out;
  out.ettr = ettr;
  auto& a = out.assessment;
  a.n = static_cast<int>(holders.size());
  a.k = k;
  a.time_window = config.w + ettr;
  a.p_survive = std::isinf(a.time_window) ? (std::isinf(config.tau) ? 1.0 : 0.0)
                                          : survival_probability(a.time_window, config.tau);
  a.durability = durability(a.n, k, a.p_survive);
  return out;
}

}  // namespace p2pbackup
