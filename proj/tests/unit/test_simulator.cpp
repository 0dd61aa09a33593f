#include <doctest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "p2pbackup/simulator.hpp"
#include "p2pbackup/traces.hpp"
#include "support/oracles.hpp"

using namespace p2pbackup;

namespace {

PeerProfile online_peer(const std::string& id, double up, double down, Seconds horizon) {
  return make_peer_profile(id, up, down, AvailabilityTrace::always_online(horizon), 100 * kGiB);
}

PolicyConfig small_config(Bytes object, Bytes fragment, Seconds tau, Seconds w = 2 * kWeek) {
  PolicyConfig c;
  c.object_size = object;
  c.fragment_size = fragment;
  c.tau = tau;
  c.w = w;
  return c;
}

std::vector<PeerProfile> synthetic_peers(int count, Seconds horizon, std::uint64_t seed) {
  SyntheticTraceParams p;
  p.peer_count = count;
  p.horizon = horizon;
  p.seed = seed;
  const auto traces = filter_min_availability(generate_synthetic_traces(p));
  return build_peers(traces, default_bandwidth_distribution(), seed, 20 * kGiB);
}

}  // namespace

TEST_CASE("two always-online peers, one fragment each") {
  const Seconds h = kDay;
  std::vector<PeerProfile> peers{online_peer("a", kMiB, 4 * kMiB, h), online_peer("b", kMiB, 4 * kMiB, h)};
  const auto out = run_simulation(small_config(kMiB, kMiB, kForever), Policy::adaptive(), peers, 1);
  for (const auto& p : out.peers) {
    REQUIRE(p.backup_complete.has_value());
    CHECK(*p.backup_complete == doctest::Approx(1.0));
    CHECK(*p.ttb() == doctest::Approx(*p.min_ttb));
    CHECK(p.n_at_completion == 1);
    CHECK(p.loss == LossCategory::kNone);
  }
  CHECK(out.mean_redundancy() == 1.0);
  CHECK(out.placements == 2);
}

TEST_CASE("a lone peer never completes") {
  std::vector<PeerProfile> peers{online_peer("solo", kMiB, 4 * kMiB, kDay)};
  const auto out = run_simulation(small_config(kMiB, kMiB, kForever), Policy::adaptive(), peers, 1);
  CHECK_FALSE(out.peers[0].backup_complete.has_value());
  CHECK(out.peers[0].unfinished_backup_at_horizon);
  CHECK(out.placements == 0);
}

TEST_CASE("baseline places exactly n fragments per owner") {
  std::vector<PeerProfile> peers;
  for (int i = 0; i < 10; ++i) peers.push_back(online_peer("p" + std::to_string(i), kMiB, 4 * kMiB, kDay));
  const auto out = run_simulation(small_config(2 * kMiB, kMiB, kForever), Policy::baseline(5), peers, 3);
  for (const auto& p : out.peers) {
    REQUIRE(p.backup_complete.has_value());
    CHECK(p.n_at_completion == 5);
    CHECK(p.n_final == 5);
  }
  CHECK(out.placements == 50);
  CHECK(out.mean_redundancy() == 2.5);
}

TEST_CASE("without deaths and with fast holders adaptive stops at n = k") {
  std::vector<PeerProfile> peers;
  for (int i = 0; i < 12; ++i) peers.push_back(online_peer("p" + std::to_string(i), kMiB, 4 * kMiB, kDay));
  const auto out = run_simulation(small_config(4 * kMiB, kMiB, kForever), Policy::adaptive(), peers, 9);
  for (const auto& p : out.peers) {
    REQUIRE(p.backup_complete.has_value());
    CHECK(p.n_at_completion == 4);
  }
  CHECK(out.mean_redundancy() == 1.0);
}

TEST_CASE("holder timeout only fires after a continuous absence") {
  const Seconds h = 60 * kDay;
  const auto config = small_config(kMiB, kMiB, kForever);
  const Seconds theta = config.effective_timeout();
  auto run_with_gap = [&](Seconds gap) {
    const auto trace = AvailabilityTrace({{10 * kDay, PeerState::kDown}, {10 * kDay + gap, PeerState::kUp}}, h);
    std::vector<PeerProfile> peers{online_peer("owner", kMiB, 4 * kMiB, h),
                                   make_peer_profile("holder", kMiB, 4 * kMiB, trace, 100 * kGiB)};
    return run_simulation(config, Policy::adaptive(), peers, 1);
  };
  const auto brief = run_with_gap(theta / 2);
  CHECK(brief.peers[0].n_at_completion == 1);
  CHECK(brief.peers[0].n_final == 1);
  CHECK(brief.repair_placements == 0);

  const auto long_gap = run_with_gap(2 * theta);
  CHECK(long_gap.peers[0].n_at_completion == 1);
  const auto& history = long_gap.peers[0].n_history;
  const auto dropped = std::find_if(history.begin(), history.end(), [](const auto& e) { return e.second == 0; });
  REQUIRE(dropped != history.end());
  CHECK(dropped->first == doctest::Approx(10 * kDay + theta));
  // The holder is the only candidate, so the repair waits for its return.
  CHECK(long_gap.repair_placements == 1);
  CHECK(long_gap.peers[0].n_final == 1);
}

TEST_CASE("a restore from one fast holder takes exactly minTTR") {
  const Seconds h = 60 * kDay;
  std::vector<PeerProfile> peers;
  for (int i = 0; i < 20; ++i) peers.push_back(online_peer("p" + std::to_string(i), 100 * kMiB, kMiB, h));
  int restores = 0;
  int failed = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto out = run_simulation(small_config(kMiB, kMiB, 20 * kDay), Policy::baseline(1), peers, seed);
    for (const auto& p : out.peers) {
      if (p.restore_complete) {
        ++restores;
        CHECK(*p.ttr() == doctest::Approx(p.min_ttr).epsilon(1e-9));
        CHECK(p.min_ttr == doctest::Approx(1.0));
      }
      if (p.loss == LossCategory::kFailedRestore) {
        ++failed;
        CHECK(p.death_time.has_value());
        CHECK_FALSE(p.restore_complete.has_value());
      }
    }
    CHECK(out.repair_placements > 0);
  }
  CHECK(restores >= 5);
  CHECK(failed >= 1);
}

TEST_CASE("allocation audit, completion bounds and accounting on a synthetic run") {
  const auto peers = synthetic_peers(60, 20 * kDay, 4);
  REQUIRE(peers.size() >= 30);
  SimulationOptions options;
  int audits = 0;
  bool feasible = true, fair = true, endpoints = true;
  options.audit = [&](const AllocationAudit& a) {
    ++audits;
    const double scale = std::max(*std::max_element(a.uplink.begin(), a.uplink.end()), 1.0);
    feasible = feasible && allocation_overshoot(a.flows, a.rates, a.uplink, a.downlink) <= 1e-9 * scale;
    fair = fair && oracle::is_max_min_fair(a.flows, a.rates, a.uplink, a.downlink, 1e-7);
    for (const auto& f : a.flows) endpoints = endpoints && a.can_send[f.source] && a.can_receive[f.destination];
  };
  const auto out = run_simulation(small_config(256 * kMiB, 32 * kMiB, 30 * kDay), Policy::adaptive(), peers, 2, options);
  CHECK(audits > 100);
  CHECK(audits == out.reallocations);
  CHECK(feasible);
  CHECK(fair);
  CHECK(endpoints);
  int completed = 0;
  for (const auto& p : out.peers) {
    if (p.backup_complete) {
      ++completed;
      CHECK(*p.ttb() >= *p.min_ttb - 1e-6);
      CHECK(p.n_at_completion >= 8);
    }
    if (p.restore_complete) CHECK(*p.ttr() >= p.min_ttr - 1e-6);
    if (p.loss == LossCategory::kIncompleteUnavoidable) {
      CHECK((!p.min_ttb || *p.death_time < p.backup_start + *p.min_ttb));
    }
    if (is_incomplete_backup(p.loss)) CHECK_FALSE(p.backup_complete.has_value());
  }
  CHECK(completed > 0);
}

TEST_CASE("same seed gives the same event log") {
  const auto peers = synthetic_peers(40, 10 * kDay, 8);
  SimulationOptions options;
  options.record_event_log = true;
  const auto config = small_config(128 * kMiB, 16 * kMiB, 20 * kDay);
  const auto a = run_simulation(config, Policy::adaptive(), peers, 5, options);
  const auto b = run_simulation(config, Policy::adaptive(), peers, 5, options);
  const auto c = run_simulation(config, Policy::adaptive(), peers, 6, options);
  CHECK(a.event_log.size() > 100);
  CHECK(a.event_log == b.event_log);
  CHECK(a.event_log != c.event_log);
}

TEST_CASE("event ordering at equal times") {
  const SimEvent death{5, EventKind::kDeath, 9, 0};
  const SimEvent down{5, EventKind::kPeerDown, 1, 0};
  const SimEvent up{5, EventKind::kPeerUp, 0, 0};
  const SimEvent timeout{5, EventKind::kTimeoutExpired, 0, 0};
  const SimEvent end{5, EventKind::kHorizonEnd, 0, 0};
  CHECK(death < down);
  CHECK(down < up);
  CHECK(up < timeout);
  CHECK(timeout < end);
  CHECK(SimEvent{4, EventKind::kHorizonEnd, 0, 0} < death);
}

TEST_CASE("storage target selection is uniform and skips the owner") {
  std::mt19937_64 rng(17);
  std::vector<std::size_t> candidates{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<int> counts(10, 0);
  const int draws = 90000;
  for (int i = 0; i < draws; ++i) ++counts[*select_storage_target(rng, 3, candidates)];
  CHECK(counts[3] == 0);
  double chi2 = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    if (i == 3) continue;
    const double e = draws / 9.0;
    chi2 += (counts[i] - e) * (counts[i] - e) / e;
  }
  CHECK(chi2 < 26.12);  // 8 degrees of freedom, p = 0.001
  std::vector<std::size_t> only_owner{3};
  CHECK_FALSE(select_storage_target(rng, 3, only_owner).has_value());
}

TEST_CASE("min_ttb agrees with the step interpreter") {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 100; ++i) {
    const auto raw = oracle::random_raw_trace(rng, 3000, 20);
    const auto profile = make_peer_profile("x", std::uniform_real_distribution<double>(1, 50)(rng), 10,
                                           oracle::to_trace(raw), kGiB);
    const Bytes o = std::uniform_real_distribution<double>(1, 40000)(rng);
    const auto got = min_ttb(profile, 0, o);
    const auto expected = oracle::min_ttb_walk(raw, 0, o / profile.uplink);
    REQUIRE(got.has_value() == expected.has_value());
    if (got) CHECK(std::abs(*got - *expected) <= 1e-9);
  }
}

TEST_CASE("death times") {
  std::mt19937_64 rng(1);
  for (Seconds t : draw_death_times(5, kForever, rng)) CHECK(t == kForever);
  const auto d = draw_death_times(20000, kYear, rng);
  double mean = 0;
  for (Seconds t : d) mean += t;
  mean /= static_cast<double>(d.size());
  CHECK(mean == doctest::Approx(kYear).epsilon(0.03));
}

TEST_CASE("policy and loss names round-trip") {
  for (auto k : {PolicyKind::kAdaptive, PolicyKind::kBaseline}) CHECK(policy_kind_from_string(to_string(k)) == k);
  for (auto c : {LossCategory::kNone, LossCategory::kIncompleteBackup, LossCategory::kIncompleteUnavoidable,
                 LossCategory::kFailedRestore}) {
    CHECK(loss_category_from_string(to_string(c)) == c);
  }
  CHECK_THROWS(policy_kind_from_string("eager"));
}
