// Acceptance checks. Prints one PASS/FAIL line per criterion.
//
// Usage: acceptance [criterion...]   (no arguments runs 1-10)
// Exit status is 0 only when every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "p2pbackup/experiment.hpp"
#include "support/oracles.hpp"

using namespace p2pbackup;
namespace fs = std::filesystem;

namespace {

// Tolerances and thresholds.
constexpr int kExpectedN = 228;
constexpr double kExpectedR = 3.5625;
constexpr double kPlanSeconds = 1.0;
constexpr int kMonteCarloCases = 50;
constexpr int kMonteCarloSamples = 100000;
constexpr double kStandardErrors = 3.0;
constexpr double kClosedFormRel = 1e-12;
constexpr double kRatioLow = 0.25;
constexpr double kRatioHigh = 0.65;
constexpr double kCellSeconds = 300.0;
constexpr double kTtbFactor = 0.5;
constexpr double kUnavoidableShare = 0.5;
constexpr int kDeterminismConfigs = 5;
constexpr double kOvershootRel = 1e-9;
constexpr double kBoundSlack = 1e-6;  // seconds
constexpr double kAccountingTol = 1e-9;
constexpr int kWalkTraces = 20;
constexpr double kWalkTol = 1e-9;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Allocation audit attached to every simulation run here.
struct AuditTally {
  long calls = 0;
  long violations = 0;
  double worst = 0.0;

  void check(const AllocationAudit& a) {
    ++calls;
    double cap = 1.0;
    for (double u : a.uplink) cap = std::max(cap, u);
    for (double d : a.downlink) cap = std::max(cap, d);
    const double over = allocation_overshoot(a.flows, a.rates, a.uplink, a.downlink);
    worst = std::max(worst, over / cap);
    bool ok = over <= kOvershootRel * cap;
    for (std::size_t f = 0; f < a.flows.size(); ++f) {
      ok = ok && a.rates[f] >= 0.0 && a.can_send[a.flows[f].source] && a.can_receive[a.flows[f].destination];
    }
    if (!ok) ++violations;
  }
};

class Lab {
 public:
  Lab() {
    auto r = load_config(fs::path(P2PBACKUP_SOURCE_DIR) / "configs/full_grid.ini");
    if (!r.ok()) throw ConfigError(r.errors());
    spec_ = std::move(*r.spec);
    traces_ = load_traces(spec_.traces);
    bandwidth_ = std::make_unique<BandwidthDistribution>(load_bandwidth(spec_.traces));
    n_fixed_ = baseline_n(spec_);
  }

  const ExperimentSpec& spec() const { return spec_; }
  int n_fixed() const { return n_fixed_; }
  std::size_t peer_count() const { return traces_.size(); }
  AuditTally& audit() { return audit_; }

  const std::vector<PeerProfile>& peers(std::uint64_t seed) {
    auto it = peers_.find(seed);
    if (it == peers_.end()) {
      it = peers_
               .emplace(seed, build_peers(traces_, *bandwidth_, seed, spec_.base.capacity,
                                          spec_.traces.downlink_factor))
               .first;
    }
    return it->second;
  }

  // Ten seeded runs of one (policy, tau, w) cell, computed once.
  const std::vector<SimulationOutcome>& cell(PolicyKind policy, Seconds tau, Seconds w) {
    const auto key = std::make_tuple(policy, tau, w);
    if (auto it = cells_.find(key); it != cells_.end()) return it->second;
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<SimulationOutcome> runs;
    for (std::uint64_t seed : spec_.seeds) {
      PolicyConfig config = spec_.base;
      config.tau = tau;
      config.w = w;
      const Policy p = policy == PolicyKind::kBaseline ? Policy::baseline(n_fixed_) : Policy::adaptive();
      runs.push_back(run_simulation(config, p, peers(seed), seed, options()));
      for (auto& peer : runs.back().peers) peer.n_history.clear();
    }
    std::cerr << "  ran " << to_string(policy) << " tau=" << duration_label(tau) << " w=" << duration_label(w)
              << " x" << runs.size() << " in " << fmt("%.1f", seconds_since(t0)) << " s\n";
    return cells_.emplace(key, std::move(runs)).first->second;
  }

  std::vector<const SimulationOutcome*> all_runs() const {
    std::vector<const SimulationOutcome*> out;
    for (const auto& [key, runs] : cells_) {
      for (const auto& r : runs) out.push_back(&r);
    }
    return out;
  }

  std::vector<std::vector<SimulationOutcome>> all_cells() const {
    std::vector<std::vector<SimulationOutcome>> out;
    for (const auto& [key, runs] : cells_) out.push_back(runs);
    return out;
  }

  SimulationOptions options() {
    SimulationOptions o;
    o.max_parallel_uploads = spec_.max_parallel_uploads;
    o.n_cap_factor = spec_.n_cap_factor;
    o.audit = [this](const AllocationAudit& a) { audit_.check(a); };
    return o;
  }

 private:
  ExperimentSpec spec_;
  std::vector<NamedTrace> traces_;
  std::unique_ptr<BandwidthDistribution> bandwidth_;
  int n_fixed_ = 0;
  std::map<std::uint64_t, std::vector<PeerProfile>> peers_;
  std::map<std::tuple<PolicyKind, Seconds, Seconds>, std::vector<SimulationOutcome>> cells_;
  AuditTally audit_;
};

Lab& lab() {
  static Lab instance;
  return instance;
}

double mean_r(const std::vector<SimulationOutcome>& runs) { return redundancy_summary(runs).front().mean_r; }

// --- criteria ------------------------------------------------------------

Verdict baseline_reproduction() {
  const std::string cmd = std::string(P2PBACKUP_CLI) + " plan --k 64 --availability 0.36 --target 0.99";
  const auto t0 = std::chrono::steady_clock::now();
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {false, "cannot run " + cmd};
  std::string text;
  char buf[256];
  while (std::fgets(buf, sizeof buf, pipe)) text += buf;
  const int status = pclose(pipe);
  const double elapsed = seconds_since(t0);
  int n = -1;
  double r = -1;
  if (auto pos = text.find("n = "); pos != std::string::npos) n = std::atoi(text.c_str() + pos + 4);
  if (auto pos = text.find("r = "); pos != std::string::npos) r = std::atof(text.c_str() + pos + 4);
  const bool pass = status == 0 && n == kExpectedN && r == kExpectedR && elapsed < kPlanSeconds;
  return {pass, fmt("plan gave n=%d r=%.17g in %.3f s; expected n=%d r=%g", n, r, elapsed, kExpectedN, kExpectedR)};
}

Verdict durability_oracle() {
  std::mt19937_64 rng(20240601);
  int bad = 0;
  double worst_z = 0.0;
  for (int c = 0; c < kMonteCarloCases; ++c) {
    const int n = std::uniform_int_distribution<int>(1, 200)(rng);
    const int k = std::uniform_int_distribution<int>(1, n)(rng);
    double p = 0.0;
    while (!(p > 0.0)) p = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const double d = durability(n, k, p);
    std::binomial_distribution<int> trial(n, p);
    int hits = 0;
    for (int s = 0; s < kMonteCarloSamples; ++s) hits += trial(rng) >= k;
    const double estimate = static_cast<double>(hits) / kMonteCarloSamples;
    const double se = std::sqrt(d * (1.0 - d) / kMonteCarloSamples);
    const double diff = std::abs(estimate - d);
    if (se > 0.0) worst_z = std::max(worst_z, diff / se);
    if (diff > kStandardErrors * se && diff > 0.0) ++bad;
  }
  int closed_bad = 0;
  double worst_rel = 0.0;
  for (int k : {1, 2, 5, 16, 64, 100, 200}) {
    for (double p : {0.05, 0.36, 0.5, 0.9, 0.999}) {
      const double exact = std::pow(p, k);
      const double rel = std::abs(durability(k, k, p) - exact) / exact;
      worst_rel = std::max(worst_rel, rel);
      if (rel > kClosedFormRel) ++closed_bad;
    }
  }
  return {bad == 0 && closed_bad == 0,
          fmt("%d/%d Monte Carlo cases outside %.0f SE (worst %.2f SE); p^k worst rel err %.2e over 35 cases",
              bad, kMonteCarloCases, kStandardErrors, worst_z, worst_rel)};
}

Verdict ettr_formula() {
  struct Case {
    Bytes object;
    BytesPerSecond downlink;
    int k;
    std::vector<double> rates;
    double expected;
  };
  const Bytes o = 10 * kGiB;  // 10737418240 bytes
  const std::vector<Case> cases{
      // k-th largest of {4000, 1000, 3000, 2000} at k=2 is 3000.
      {o, 1e9, 2, {4000, 1000, 3000, 2000}, 10737418240.0 / (2 * 3000.0)},
      // k=1 takes the fastest holder.
      {o, 1e9, 1, {10, 20, 5}, 10737418240.0 / 20.0},
      // Downlink bound dominates: o / D0 = 10737418240 / 1000.
      {o, 1000, 2, {1e6, 1e6, 1e6}, 10737418240.0 / 1000.0},
      // Ties: third largest of {7,7,7,7} is 7.
      {o, 1e9, 3, {7, 7, 7, 7}, 10737418240.0 / (3 * 7.0)},
      // n = k uses the slowest holder.
      {o, 1e9, 4, {100, 50, 25, 400}, 10737418240.0 / (4 * 25.0)},
      // Two fragments on one peer count twice: {90, 90, 10}, k=2 -> 90.
      {o, 1e9, 2, {90, 10, 90}, 10737418240.0 / (2 * 90.0)},
      // A holder never online gives an unbounded estimate.
      {o, 1e9, 2, {0, 5}, kForever},
      // Both bounds equal: o/(2*500) == o/1000.
      {o, 1000, 2, {500, 500, 1}, 10737418240.0 / 1000.0},
      // 64 fragments of a 10 GiB object, rates 1..70: 64th largest is 7.
      {o, 1e9, 64, [] { std::vector<double> v; for (int i = 1; i <= 70; ++i) v.push_back(i); return v; }(),
       10737418240.0 / (64 * 7.0)},
      // Small object: 1 MiB, rates u*a = 2048*0.5 etc.
      {kMiB, 4096, 2, {1024, 512, 256}, 1048576.0 / (2 * 512.0)},
  };
  int bad = 0;
  std::string first;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i];
    std::vector<HolderRate> holders;
    for (std::size_t j = 0; j < c.rates.size(); ++j) holders.push_back({j, c.rates[j]});
    const double got = estimate_ttr(c.object, c.downlink, c.k, holders);
    if (got != c.expected) {
      ++bad;
      if (first.empty()) first = fmt("; case %zu gave %.17g, expected %.17g", i, got, c.expected);
    }
  }
  return {bad == 0, fmt("%d/%zu holder sets differ", bad, cases.size()) + first};
}

Verdict redundancy_reduction() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& adaptive = lab().cell(PolicyKind::kAdaptive, kYear, 2 * kWeek);
  const auto& baseline = lab().cell(PolicyKind::kBaseline, kYear, 2 * kWeek);
  const double elapsed = seconds_since(t0);
  const double ra = mean_r(adaptive), rb = mean_r(baseline);
  const double ratio = ra / rb;
  const bool pass = ratio >= kRatioLow && ratio <= kRatioHigh && elapsed < kCellSeconds;
  return {pass, fmt("%zu peers, 10 seeds: adaptive r=%.4f, baseline r=%.4f (n=%d), ratio %.3f in [%.2f, %.2f]; "
                    "cell took %.0f s (limit %.0f s)",
                    lab().peer_count(), ra, rb, lab().n_fixed(), ratio, kRatioLow, kRatioHigh, elapsed, kCellSeconds)};
}

Verdict monotonicity() {
  bool pass = true;
  std::string detail;
  for (Seconds tau : {90 * kDay, kYear, 4 * kYear}) {
    detail += (detail.empty() ? "" : "; ") + ("tau=" + duration_label(tau) + ":");
    double previous = -1.0;
    for (Seconds w : {0.0, kWeek, 2 * kWeek, 4 * kWeek}) {
      const double r = mean_r(lab().cell(PolicyKind::kAdaptive, tau, w));
      detail += fmt(" %.4f", r);
      if (r < previous) pass = false;
      previous = r;
    }
  }
  return {pass, "mean adaptive r over w=0,1,2,4 weeks " + detail};
}

double median_ratio(const std::vector<SimulationOutcome>& runs, bool ttb) {
  const auto v = ttb ? ttb_ratios(runs) : ttr_ratios(runs);
  return v.empty() ? NAN : median(v);
}

Verdict ttb_improvement() {
  const double a = median_ratio(lab().cell(PolicyKind::kAdaptive, kYear, 2 * kWeek), true);
  const double b = median_ratio(lab().cell(PolicyKind::kBaseline, kYear, 2 * kWeek), true);
  return {a <= kTtbFactor * b, fmt("median TTB/minTTB adaptive %.3f, baseline %.3f (limit %.3f)", a, b, kTtbFactor * b)};
}

Verdict ttr_direction() {
  const double a = median_ratio(lab().cell(PolicyKind::kAdaptive, kYear, 2 * kWeek), false);
  const double b = median_ratio(lab().cell(PolicyKind::kBaseline, kYear, 2 * kWeek), false);
  const double w0 = median_ratio(lab().cell(PolicyKind::kAdaptive, kYear, 0.0), false);
  const double w4 = median_ratio(lab().cell(PolicyKind::kAdaptive, kYear, 4 * kWeek), false);
  return {a >= b && w4 <= w0,
          fmt("median TTR/minTTR adaptive %.3f vs baseline %.3f; adaptive w=4w %.3f vs w=0 %.3f", a, b, w4, w0)};
}

struct LossCounts {
  long incomplete = 0, unavoidable = 0, failed = 0, deaths = 0;
};

LossCounts count_losses(const std::vector<SimulationOutcome>& runs) {
  LossCounts c;
  for (const auto& run : runs) {
    for (const auto& p : run.peers) {
      c.deaths += p.death_time.has_value();
      c.incomplete += is_incomplete_backup(p.loss);
      c.unavoidable += p.loss == LossCategory::kIncompleteUnavoidable;
      c.failed += p.loss == LossCategory::kFailedRestore;
    }
  }
  return c;
}

Verdict loss_structure() {
  const auto longlived = count_losses(lab().cell(PolicyKind::kAdaptive, 4 * kYear, 2 * kWeek));
  const auto shortlived = count_losses(lab().cell(PolicyKind::kAdaptive, 90 * kDay, 2 * kWeek));
  const double share = shortlived.incomplete > 0
                           ? static_cast<double>(shortlived.unavoidable) / static_cast<double>(shortlived.incomplete)
                           : 1.0;
  const bool pass = longlived.failed == 0 && shortlived.incomplete >= shortlived.failed && share >= kUnavoidableShare;
  return {pass, fmt("adaptive w=2w, 10 seeds. tau=4y: %ld failed restores (%ld deaths). tau=90d: incomplete %ld, "
                    "failed %ld, unavoidable %ld (share %.3f, need >= %.2f)",
                    longlived.failed, longlived.deaths, shortlived.incomplete, shortlived.failed,
                    shortlived.unavoidable, share, kUnavoidableShare)};
}

Verdict simulator_invariants() {
  // Determinism on random configurations.
  std::mt19937_64 rng(77);
  int mismatches = 0;
  long events = 0;
  for (int c = 0; c < kDeterminismConfigs; ++c) {
    PolicyConfig config = lab().spec().base;
    const Seconds taus[] = {30 * kDay, 90 * kDay, kYear, kForever};
    const Seconds ws[] = {0.0, kWeek, 2 * kWeek};
    config.tau = taus[std::uniform_int_distribution<int>(0, 3)(rng)];
    config.w = ws[std::uniform_int_distribution<int>(0, 2)(rng)];
    config.object_size = std::uniform_int_distribution<int>(1, 4)(rng) * kGiB;
    config.fragment_size = std::uniform_int_distribution<int>(1, 4)(rng) * 128 * kMiB;
    const std::uint64_t seed = rng() % 1000 + 1;
    const auto& all = lab().peers(seed);
    const auto count = std::uniform_int_distribution<std::size_t>(30, 100)(rng);
    const std::vector<PeerProfile> peers(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(count));
    const bool baseline = std::bernoulli_distribution(0.5)(rng);
    const Policy policy = baseline ? Policy::baseline(baseline_fragment_count(config.k(), config.baseline_mean_availability,
                                                                              config.baseline_target_availability))
                                   : Policy::adaptive();
    auto options = lab().options();
    options.record_event_log = true;
    const auto a = run_simulation(config, policy, peers, seed, options);
    const auto b = run_simulation(config, policy, peers, seed, options);
    events += static_cast<long>(a.event_log.size());
    if (a.event_log != b.event_log || a.event_log.empty()) ++mismatches;
  }

  // Completion bounds and loss accounting on every run made so far.
  long bound_violations = 0, completions = 0;
  for (const auto* run : lab().all_runs()) {
    for (const auto& p : run->peers) {
      if (p.backup_complete) {
        ++completions;
        if (!p.min_ttb || *p.ttb() < *p.min_ttb - kBoundSlack) ++bound_violations;
      }
      if (p.restore_complete) {
        ++completions;
        if (*p.ttr() < p.min_ttr - kBoundSlack) ++bound_violations;
      }
    }
  }
  int tables = 0, accounting_bad = 0;
  for (const auto& runs : lab().all_cells()) {
    ++tables;
    if (!accounting_holds(categorize_losses(runs), kAccountingTol)) ++accounting_bad;
  }
  const auto& audit = lab().audit();
  const bool pass = mismatches == 0 && audit.violations == 0 && audit.calls > 0 && bound_violations == 0 &&
                    accounting_bad == 0;
  return {pass, fmt("audit: %ld/%ld reallocations violate caps or endpoints (worst overshoot %.1e of cap); "
                    "determinism: %d/%d configs differ (%ld events); bounds: %ld/%ld completions below minimum; "
                    "accounting: %d/%d loss rows broken",
                    audit.violations, audit.calls, audit.worst, mismatches, kDeterminismConfigs, events,
                    bound_violations, completions, accounting_bad, tables)};
}

Verdict min_ttb_walk() {
  std::mt19937_64 rng(4242);
  int bad = 0, reachable = 0;
  double worst = 0.0;
  for (int i = 0; i < kWalkTraces; ++i) {
    const auto raw = oracle::random_raw_trace(rng, 5000, 24);
    const double uplink = std::uniform_real_distribution<double>(1.0, 100.0)(rng);
    const auto peer = make_peer_profile("walk", uplink, 4 * uplink, oracle::to_trace(raw), kGiB);
    const Bytes o = std::uniform_real_distribution<double>(1.0, 3000.0 * uplink)(rng);
    const auto got = min_ttb(peer, 0.0, o);
    const auto expected = oracle::min_ttb_walk(raw, 0, o / uplink);
    if (got.has_value() != expected.has_value()) {
      ++bad;
      continue;
    }
    if (!got) continue;
    ++reachable;
    const double diff = std::abs(*got - *expected);
    worst = std::max(worst, diff);
    if (diff > kWalkTol) ++bad;
  }
  return {bad == 0, fmt("%d/%d traces disagree (%d reachable within the horizon); worst |diff| %.2e s", bad,
                        kWalkTraces, reachable, worst)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"baseline reproduction", baseline_reproduction},
      {"durability oracle equivalence", durability_oracle},
      {"eTTR formula", ettr_formula},
      {"redundancy reduction", redundancy_reduction},
      {"monotonicity in w", monotonicity},
      {"TTB improvement", ttb_improvement},
      {"TTR degradation direction", ttr_direction},
      {"data-loss structure", loss_structure},
      {"simulator invariants", simulator_invariants},
      {"min_ttb trace-walk oracle", min_ttb_walk},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    const int c = std::atoi(argv[i]);
    if (c < 1 || c > static_cast<int>(criteria.size())) {
      std::cerr << "unknown criterion '" << argv[i] << "'\n";
      return 2;
    }
    selected.insert(c);
  }
  if (selected.empty()) {
    for (int c = 1; c <= static_cast<int>(criteria.size()); ++c) selected.insert(c);
  }

  int failed = 0;
  for (int c : selected) {
    const auto& [name, check] = criteria[static_cast<std::size_t>(c - 1)];
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << c << " (" << name << "): " << v.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
