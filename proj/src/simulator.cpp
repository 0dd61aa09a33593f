#include "p2pbackup/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <queue>
#include <set>
#include <stdexcept>

namespace p2pbackup {

std::string to_string(PolicyKind kind) { return kind == PolicyKind::kAdaptive ? "adaptive" : "baseline"; }

PolicyKind policy_kind_from_string(const std::string& name) {
  if (name == "adaptive") return PolicyKind::kAdaptive;
  if (name == "baseline") return PolicyKind::kBaseline;
  throw std::invalid_argument("unknown policy '" + name + "'");
}

std::string to_string(EventKind kind) {
  switch (kind) {
    case EventKind::kDeath: return "DEATH";
    case EventKind::kPeerDown: return "PEER_DOWN";
    case EventKind::kPeerUp: return "PEER_UP";
    case EventKind::kTransferComplete: return "TRANSFER_COMPLETE";
    case EventKind::kTimeoutExpired: return "TIMEOUT_EXPIRED";
    case EventKind::kHorizonEnd: return "HORIZON_END";
  }
  return "?";
}

std::string to_string(LossCategory category) {
  switch (category) {
    case LossCategory::kNone: return "none";
    case LossCategory::kIncompleteBackup: return "incomplete_backup";
    case LossCategory::kIncompleteUnavoidable: return "incomplete_unavoidable";
    case LossCategory::kFailedRestore: return "failed_restore";
  }
  return "?";
}

LossCategory loss_category_from_string(const std::string& name) {
  for (auto c : {LossCategory::kNone, LossCategory::kIncompleteBackup, LossCategory::kIncompleteUnavoidable,
                 LossCategory::kFailedRestore}) {
    if (to_string(c) == name) return c;
  }
  throw std::invalid_argument("unknown loss category '" + name + "'");
}

std::optional<Seconds> PeerOutcome::ttb() const {
  if (!backup_complete) return std::nullopt;
  return *backup_complete - backup_start;
}

std::optional<Seconds> PeerOutcome::ttr() const {
  if (!restore_complete || !restore_start) return std::nullopt;
  return *restore_complete - *restore_start;
}

double SimulationOutcome::mean_redundancy() const {
  double sum = 0.0;
  int count = 0;
  for (const auto& p : peers) {
    if (!p.backup_complete) continue;
    sum += redundancy_factor(p.n_at_completion, k);
    ++count;
  }
  return count == 0 ? std::nan("") : sum / count;
}

std::optional<Seconds> min_ttb(const PeerProfile& peer, Seconds start, Bytes object_size) {
  auto done = peer.trace.time_to_accumulate(start, object_size / peer.uplink);
  if (!done) return std::nullopt;
  return *done - start;
}

Seconds min_ttr(const PeerProfile& peer, Bytes object_size) { return object_size / peer.downlink; }

std::optional<std::size_t> select_storage_target(std::mt19937_64& rng, std::size_t owner,
                                                 std::span<const std::size_t> candidates) {
  std::vector<std::size_t> eligible;
  eligible.reserve(candidates.size());
  for (auto c : candidates) {
    if (c != owner) eligible.push_back(c);
  }
  if (eligible.empty()) return std::nullopt;
  std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
  return eligible[pick(rng)];
}

std::vector<Seconds> draw_death_times(std::size_t peers, Seconds tau, std::mt19937_64& rng) {
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be > 0");
  std::vector<Seconds> out(peers, kForever);
  if (std::isinf(tau)) return out;
  std::exponential_distribution<double> life(1.0 / tau);
  for (auto& t : out) t = life(rng);
  return out;
}

void write_event_log(std::ostream& out, std::span<const std::string> log) {
  for (const auto& line : log) out << line << '\n';
}

namespace {

enum class TransferKind : std::uint8_t { kUpload, kRestore };

struct Transfer {
  TransferKind kind = TransferKind::kUpload;
  std::size_t source = 0;
  std::size_t destination = 0;
  Bytes remaining = 0.0;  // as of updated_at
  BytesPerSecond rate = 0.0;
  Seconds updated_at = 0.0;
  Seconds finish_at = kForever;
  bool active = false;
  bool live = false;
};

struct PeerRuntime {
  bool online = false;  // trace state
  bool dead = false;
  bool flagged = false;  // offline for at least the timeout
  std::uint64_t offline_epoch = 0;
  std::size_t next_trace_event = 0;
  std::set<std::size_t> stored;      // owners whose fragment is physically here
  std::set<std::size_t> hosted_for;  // owners whose placement lists this peer
  int reserved = 0;                  // incoming uploads in flight
  std::set<std::uint64_t> transfers;
  PlacementState placement;
  Phase phase = Phase::kBackingUp;
  std::map<std::size_t, std::uint64_t> uploads;    // destination -> transfer
  std::map<std::size_t, std::uint64_t> downloads;  // holder -> transfer (restore)
  std::set<std::size_t> received;                  // restore: holders already drained
};

constexpr Bytes kCompletionSlack = 1e-6;

class Simulation {
 public:
  Simulation(const PolicyConfig& config, Policy policy, std::span<const PeerProfile> peers, std::uint64_t seed,
             const SimulationOptions& options)
      : config_(config), policy_(policy), peers_(peers), options_(options) {
    config_.validate();
    if (peers_.empty()) throw std::invalid_argument("simulation needs at least one peer");
    horizon_ = peers_.front().trace.horizon();
    for (const auto& p : peers_) {
      if (p.trace.horizon() != horizon_) throw std::invalid_argument("all traces must share one horizon");
      if (!(p.uplink > 0.0) || !(p.downlink > 0.0)) throw std::invalid_argument("peer " + p.id + ": bad bandwidth");
    }
    k_ = config_.k();
    if (policy_.kind == PolicyKind::kBaseline && policy_.n_fixed < k_) {
      throw std::invalid_argument("baseline n_fixed must be >= k");
    }
    if (options_.max_parallel_uploads < 1) throw std::invalid_argument("max_parallel_uploads must be >= 1");
    fragment_ = config_.fragment_size;
    timeout_ = config_.effective_timeout();
    n_cap_ = options_.n_cap_factor * k_;

    std::seed_seq death_seq{seed, std::uint64_t{1}};
    std::seed_seq placement_seq{seed, std::uint64_t{2}};
    death_rng_.seed(death_seq);
    placement_rng_.seed(placement_seq);

    outcome_.policy = policy_.kind;
    outcome_.n_fixed = policy_.kind == PolicyKind::kBaseline ? policy_.n_fixed : 0;
    outcome_.k = k_;
    outcome_.tau = config_.tau;
    outcome_.w = config_.w;
    outcome_.horizon = horizon_;
    outcome_.seed = seed;

    const std::size_t n = peers_.size();
    rt_.resize(n);
    uplink_.resize(n);
    downlink_.resize(n);
    holder_rate_.resize(n);
    sigma2_.resize(n);
    can_send_.assign(n, 0);
    can_receive_.assign(n, 0);
    outcome_.peers.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& p = peers_[i];
      uplink_[i] = p.uplink;
      downlink_[i] = p.downlink;
      holder_rate_[i] = expected_upload_rate(p.uplink, p.availability);
      auto& o = outcome_.peers[i];
      o.id = p.id;
      o.backup_start = 0.0;
      o.min_ttb = min_ttb(p, 0.0, config_.object_size);
      o.min_ttr = min_ttr(p, config_.object_size);
      sigma2_[i] = sigma2(o.min_ttr, config_.alpha, config_.sigma2_floor);
      rt_[i].placement = PlacementState(i);
    }
  }

  SimulationOutcome run() {
    const std::size_t n = peers_.size();
    const auto deaths = draw_death_times(n, config_.tau, death_rng_);
    for (std::size_t i = 0; i < n; ++i) {
      if (deaths[i] < horizon_) push({deaths[i], EventKind::kDeath, i, 0});
      rt_[i].online = peers_[i].trace.initially_online();
      schedule_trace_event(i);
    }
    push({horizon_, EventKind::kHorizonEnd, 0, 0});
    for (std::size_t i = 0; i < n; ++i) pump(i);

    while (true) {
      // Rates only change on reallocation, so the earliest completion is cached there.
      if (dirty_) reallocate();
      const SimEvent& top = queue_.top();
      if (next_completion_ && (next_completion_->first < top.time ||
                               (next_completion_->first == top.time && top.kind > EventKind::kTransferComplete))) {
        now_ = next_completion_->first;
        complete_due_transfers(next_completion_->second);
        continue;
      }
      const SimEvent ev = top;
      queue_.pop();
      now_ = ev.time;
      if (ev.kind == EventKind::kHorizonEnd) {
        log_event(ev);
        break;
      }
      handle(ev);
    }
    finalize();
    return std::move(outcome_);
  }

 private:
  // --- bookkeeping -------------------------------------------------------

  void push(const SimEvent& ev) { queue_.push(ev); }

  void log_event(const SimEvent& ev) {
    if (!options_.record_event_log) return;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%.17g %s %zu %llu", ev.time, to_string(ev.kind).c_str(), ev.subject,
                  static_cast<unsigned long long>(ev.tag));
    outcome_.event_log.emplace_back(buf);
  }

  void log_note(const char* what, std::size_t peer, double a = 0.0, double b = 0.0, double c = 0.0) {
    if (!options_.record_event_log) return;
    char buf[200];
    std::snprintf(buf, sizeof buf, "%.17g %s %zu %.17g %.17g %.17g", now_, what, peer, a, b, c);
    outcome_.event_log.emplace_back(buf);
  }

  void record_n(std::size_t owner) {
    outcome_.peers[owner].n_history.emplace_back(now_, rt_[owner].placement.n());
  }

  void schedule_trace_event(std::size_t peer) {
    auto& r = rt_[peer];
    const auto& events = peers_[peer].trace.events();
    if (r.next_trace_event >= events.size()) return;
    const auto& e = events[r.next_trace_event];
    push({e.time, e.kind == PeerState::kUp ? EventKind::kPeerUp : EventKind::kPeerDown, peer, r.next_trace_event});
    ++r.next_trace_event;
  }

  bool can_send(std::size_t p) const { return !rt_[p].dead && rt_[p].online; }

  bool can_receive(const Transfer& t) const {
    const auto& r = rt_[t.destination];
    if (t.kind == TransferKind::kRestore) return r.phase == Phase::kRestoring;
    return !r.dead && r.online;
  }

  void settle(Transfer& t) const {
    t.remaining = std::max(0.0, t.remaining - t.rate * (now_ - t.updated_at));
    t.updated_at = now_;
  }

  void refresh(std::uint64_t id) {
    auto& t = transfers_[id];
    const bool active = can_send(t.source) && can_receive(t);
    if (active != t.active) {
      settle(t);
      t.active = active;
      t.rate = 0.0;
      if (active) {
        active_set_.insert(id);
      } else {
        active_set_.erase(id);
      }
      dirty_ = true;
    }
  }

  void refresh_peer(std::size_t p) {
    for (auto id : rt_[p].transfers) refresh(id);
  }

  std::uint64_t open_transfer(TransferKind kind, std::size_t source, std::size_t destination) {
    const std::uint64_t id = next_transfer_id_++;
    transfers_.push_back(Transfer{kind, source, destination, fragment_, 0.0, now_, kForever, false, true});
    rt_[source].transfers.insert(id);
    rt_[destination].transfers.insert(id);
    if (kind == TransferKind::kUpload) {
      rt_[destination].reserved += 1;
      rt_[source].uploads[destination] = id;
    } else {
      rt_[destination].downloads[source] = id;
    }
    refresh(id);
    return id;
  }

  void close_transfer(std::uint64_t id) {
    auto& t = transfers_[id];
    if (!t.live) return;
    t.live = false;
    if (t.active) {
      t.active = false;
      active_set_.erase(id);
      dirty_ = true;
    }
    rt_[t.source].transfers.erase(id);
    rt_[t.destination].transfers.erase(id);
    if (t.kind == TransferKind::kUpload) {
      rt_[t.destination].reserved -= 1;
      rt_[t.source].uploads.erase(t.destination);
    } else {
      rt_[t.destination].downloads.erase(t.source);
    }
  }

  void cancel_uploads(std::size_t owner) {
    std::vector<std::uint64_t> ids;
    for (const auto& [dest, id] : rt_[owner].uploads) ids.push_back(id);
    for (auto id : ids) close_transfer(id);
  }

  void cancel_downloads(std::size_t owner) {
    std::vector<std::uint64_t> ids;
    for (const auto& [holder, id] : rt_[owner].downloads) ids.push_back(id);
    for (auto id : ids) close_transfer(id);
  }

  // --- bandwidth ---------------------------------------------------------

  void reallocate() {
    dirty_ = false;
    ++outcome_.reallocations;
    active_.assign(active_set_.begin(), active_set_.end());
    flows_.clear();
    for (auto id : active_) {
      auto& t = transfers_[id];
      settle(t);
      flows_.push_back({t.source, t.destination});
    }
    allocator_.allocate(flows_, uplink_, downlink_, rates_);
    next_completion_.reset();
    for (std::size_t i = 0; i < active_.size(); ++i) {
      auto& t = transfers_[active_[i]];
      t.rate = rates_[i];
      t.finish_at = t.rate > 0.0 ? now_ + t.remaining / t.rate : kForever;
      if (t.rate > 0.0 && (!next_completion_ || t.finish_at < next_completion_->first)) {
        next_completion_ = {t.finish_at, active_[i]};
      }
    }
    if (options_.audit) {
      for (std::size_t p = 0; p < peers_.size(); ++p) {
        can_send_[p] = can_send(p) ? 1 : 0;
        can_receive_[p] = (can_send(p) || rt_[p].phase == Phase::kRestoring) ? 1 : 0;
      }
      options_.audit(AllocationAudit{now_, flows_, rates_, uplink_, downlink_, can_send_, can_receive_});
    }
  }

  // `first` is the transfer whose completion time is now; others finishing
  // within the slack complete with it, in id order.
  void complete_due_transfers(std::uint64_t first) {
    due_.clear();
    for (auto id : active_) {
      auto& t = transfers_[id];
      if (!t.live || !t.active || t.rate <= 0.0) continue;
      settle(t);
      if (id == first) t.remaining = 0.0;
      if (t.remaining <= kCompletionSlack) due_.push_back(id);
    }
    const std::vector<std::uint64_t> due = due_;
    for (auto id : due) {
      if (!transfers_[id].live) continue;  // cancelled by an earlier completion
      const Transfer t = transfers_[id];
      if (options_.record_event_log) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%.17g %s %llu %zu %zu", now_, to_string(EventKind::kTransferComplete).c_str(),
                      static_cast<unsigned long long>(id), t.source, t.destination);
        outcome_.event_log.emplace_back(buf);
      }
      close_transfer(id);
      if (t.kind == TransferKind::kUpload) {
        on_upload_complete(t.source, t.destination);
      } else {
        on_restore_download_complete(t.destination, t.source);
      }
    }
  }

  // --- policy ------------------------------------------------------------

  std::vector<HolderRate> holder_rates(std::size_t owner) const {
    std::vector<HolderRate> out;
    for (const auto& h : rt_[owner].placement.holders()) {
      for (int f = 0; f < h.fragments; ++f) out.push_back({h.peer, holder_rate_[h.peer]});
    }
    return out;
  }

  struct Verdict {
    bool satisfied = false;
    bool stalled = false;
    AdaptiveResult result;
  };

  Verdict adaptive_verdict(std::size_t owner) const {
    Verdict v;
    const auto holders = holder_rates(owner);
    if (holders.size() < static_cast<std::size_t>(k_)) return v;
    v.result = adaptive_assessment(config_, holders, downlink_[owner]);
    if (stop_condition(v.result.assessment, v.result.ettr, config_.sigma1, sigma2_[owner])) {
      v.satisfied = true;
    } else if (v.result.assessment.durability >= config_.sigma1 && v.result.assessment.n >= n_cap_) {
      v.satisfied = true;
      v.stalled = true;
    }
    return v;
  }

  bool maintenance_satisfied(std::size_t owner) const {
    if (policy_.kind == PolicyKind::kBaseline) return rt_[owner].placement.n() >= policy_.n_fixed;
    return adaptive_verdict(owner).satisfied;
  }

  bool is_eligible(std::size_t owner, std::size_t p) const {
    if (p == owner || !can_send(p)) return false;
    const auto& r = rt_[p];
    if (r.hosted_for.count(owner) || rt_[owner].uploads.count(p)) return false;
    const Bytes used = static_cast<Bytes>(r.stored.size() + static_cast<std::size_t>(r.reserved)) * fragment_;
    return peers_[p].capacity - used >= fragment_;
  }

  std::vector<std::size_t>& eligible_targets(std::size_t owner) {
    candidates_.clear();
    for (std::size_t p = 0; p < peers_.size(); ++p) {
      if (is_eligible(owner, p)) candidates_.push_back(p);
    }
    return candidates_;
  }

  // Starts as many uploads as the owner's phase and concurrency allow.
  void pump(std::size_t owner) {
    auto& r = rt_[owner];
    if (!can_send(owner) || (r.phase != Phase::kBackingUp && r.phase != Phase::kMaintaining)) {
      waiting_.erase(owner);
      return;
    }
    int running = 0;
    for (const auto& [dest, id] : r.uploads) running += transfers_[id].active ? 1 : 0;
    int want = options_.max_parallel_uploads - running;
    // Paused partial uploads keep their progress but not their slot; whatever is
    // still in flight when the target is reached gets cancelled.
    if (r.phase == Phase::kMaintaining && maintenance_satisfied(owner)) {
      cancel_uploads(owner);
      want = 0;
    }
    bool starved = false;
    if (want > 0) {
      // Opening an upload only changes the eligibility of its target.
      auto& candidates = eligible_targets(owner);
      while (want > 0) {
        const auto target = select_storage_target(placement_rng_, owner, candidates);
        if (!target) {
          starved = true;
          break;
        }
        open_transfer(TransferKind::kUpload, owner, *target);
        candidates.erase(std::find(candidates.begin(), candidates.end(), *target));
        --want;
      }
    }
    if (starved) {
      waiting_.insert(owner);
    } else {
      waiting_.erase(owner);
    }
  }

  void complete_backup(std::size_t owner, const Verdict* verdict) {
    auto& r = rt_[owner];
    auto& o = outcome_.peers[owner];
    r.phase = Phase::kMaintaining;
    r.placement.backup_complete = true;
    r.placement.completed_at = now_;
    o.backup_complete = now_;
    o.n_at_completion = r.placement.n();
    o.completion_sigma2 = sigma2_[owner];
    if (verdict) {
      o.completion_durability = verdict->result.assessment.durability;
      o.completion_ettr = verdict->result.ettr;
      o.completion_stalled = verdict->stalled;
      if (verdict->stalled) ++outcome_.stall_count;
    }
    log_note("BACKUP_COMPLETE", owner, o.n_at_completion, o.completion_durability, o.completion_ettr);
    cancel_uploads(owner);
    // Holders that already exceeded the timeout are dropped right away.
    std::vector<std::size_t> stale;
    for (const auto& h : r.placement.holders()) {
      if (rt_[h.peer].flagged) stale.push_back(h.peer);
    }
    for (auto h : stale) drop_holder(owner, h);
  }

  void drop_holder(std::size_t owner, std::size_t holder) {
    rt_[owner].placement.remove_holder(holder);
    rt_[holder].hosted_for.erase(owner);
    rt_[holder].stored.erase(owner);
    record_n(owner);
    log_note("HOLDER_DROPPED", owner, static_cast<double>(holder));
  }

  void on_upload_complete(std::size_t owner, std::size_t holder) {
    auto& r = rt_[owner];
    rt_[holder].stored.insert(owner);
    rt_[holder].hosted_for.insert(owner);
    r.placement.add_fragment(holder);
    ++outcome_.placements;
    if (r.phase == Phase::kMaintaining) ++outcome_.repair_placements;
    record_n(owner);

    if (r.phase == Phase::kBackingUp) {
      if (policy_.kind == PolicyKind::kBaseline) {
        if (r.placement.n() >= policy_.n_fixed) complete_backup(owner, nullptr);
      } else if (r.placement.n() >= k_) {
        const Verdict v = adaptive_verdict(owner);
        if (v.satisfied) complete_backup(owner, &v);
      }
    }
    pump(owner);
  }

  // --- restore -----------------------------------------------------------

  void start_restore(std::size_t owner) {
    auto& r = rt_[owner];
    auto& o = outcome_.peers[owner];
    r.phase = Phase::kRestoring;
    o.restore_start = now_;
    log_note("RESTORE_START", owner);
    for (const auto& h : r.placement.holders()) {
      if (!rt_[h.peer].dead) open_transfer(TransferKind::kRestore, h.peer, owner);
    }
    check_restore_feasible(owner);
  }

  void check_restore_feasible(std::size_t owner) {
    auto& r = rt_[owner];
    if (r.phase != Phase::kRestoring) return;
    int reachable = static_cast<int>(r.received.size());
    for (const auto& h : r.placement.holders()) {
      if (!rt_[h.peer].dead && !r.received.count(h.peer)) reachable += h.fragments;
    }
    if (reachable >= k_) return;
    r.phase = Phase::kLost;
    outcome_.peers[owner].loss = LossCategory::kFailedRestore;
    log_note("RESTORE_FAILED", owner, reachable);
    cancel_downloads(owner);
  }

  void on_restore_download_complete(std::size_t owner, std::size_t holder) {
    auto& r = rt_[owner];
    r.received.insert(holder);
    if (static_cast<int>(r.received.size()) < k_) return;
    r.phase = Phase::kIdle;
    outcome_.peers[owner].restore_complete = now_;
    log_note("RESTORE_COMPLETE", owner);
    cancel_downloads(owner);
  }

  // --- events ------------------------------------------------------------

  void handle(const SimEvent& ev) {
    log_event(ev);
    switch (ev.kind) {
      case EventKind::kPeerUp: on_peer_up(ev.subject); break;
      case EventKind::kPeerDown: on_peer_down(ev.subject); break;
      case EventKind::kDeath: on_death(ev.subject); break;
      case EventKind::kTimeoutExpired: on_timeout(ev.subject, ev.tag); break;
      case EventKind::kTransferComplete:
      case EventKind::kHorizonEnd: break;
    }
  }

  void schedule_timeout(std::size_t peer) {
    const Seconds at = now_ + timeout_;
    if (at <= horizon_) push({at, EventKind::kTimeoutExpired, peer, rt_[peer].offline_epoch});
  }

  void on_peer_up(std::size_t p) {
    auto& r = rt_[p];
    if (r.dead) return;
    r.online = true;
    r.flagged = false;
    ++r.offline_epoch;
    schedule_trace_event(p);
    refresh_peer(p);
    pump(p);
    const std::vector<std::size_t> waiting(waiting_.begin(), waiting_.end());
    for (auto o : waiting) {
      if (is_eligible(o, p)) pump(o);
    }
  }

  std::vector<std::size_t> upload_owners_towards(std::size_t p) const {
    std::vector<std::size_t> owners;
    for (auto id : rt_[p].transfers) {
      const auto& t = transfers_[id];
      if (t.kind == TransferKind::kUpload && t.destination == p) owners.push_back(t.source);
    }
    return owners;
  }

  void on_peer_down(std::size_t p) {
    auto& r = rt_[p];
    if (r.dead) return;
    r.online = false;
    ++r.offline_epoch;
    schedule_timeout(p);
    schedule_trace_event(p);
    refresh_peer(p);
    // Owners whose upload towards p just paused may open another one.
    for (auto o : upload_owners_towards(p)) pump(o);
  }

  void on_death(std::size_t p) {
    auto& r = rt_[p];
    auto& o = outcome_.peers[p];
    o.death_time = now_;
    const bool was_online = r.online;
    r.dead = true;
    r.online = false;
    if (was_online) {
      ++r.offline_epoch;
      schedule_timeout(p);
    }
    r.stored.clear();

    std::set<std::size_t> uploaders, restorers;
    const std::vector<std::uint64_t> touching(r.transfers.begin(), r.transfers.end());
    for (auto id : touching) {
      const auto& t = transfers_[id];
      if (t.kind == TransferKind::kUpload && t.destination == p) uploaders.insert(t.source);
      if (t.kind == TransferKind::kRestore && t.source == p) restorers.insert(t.destination);
      close_transfer(id);
    }
    for (auto owner : r.hosted_for) {
      if (rt_[owner].phase == Phase::kRestoring) restorers.insert(owner);
    }

    if (r.phase == Phase::kBackingUp) {
      const bool unavoidable = !o.min_ttb || now_ < o.backup_start + *o.min_ttb;
      o.loss = unavoidable ? LossCategory::kIncompleteUnavoidable : LossCategory::kIncompleteBackup;
      r.phase = Phase::kLost;
      log_note("BACKUP_LOST", p);
    } else if (r.phase == Phase::kMaintaining) {
      start_restore(p);
    }
    waiting_.erase(p);

    for (auto owner : restorers) check_restore_feasible(owner);
    for (auto owner : uploaders) pump(owner);
  }

  void on_timeout(std::size_t p, std::uint64_t epoch) {
    auto& r = rt_[p];
    if (r.online || epoch != r.offline_epoch) return;
    r.flagged = true;
    std::set<std::size_t> affected;
    const std::vector<std::size_t> owners(r.hosted_for.begin(), r.hosted_for.end());
    for (auto owner : owners) {
      if (rt_[owner].phase != Phase::kMaintaining) continue;
      drop_holder(owner, p);
      affected.insert(owner);
    }
    for (auto owner : upload_owners_towards(p)) {
      close_transfer(rt_[owner].uploads.at(p));
      affected.insert(owner);
    }
    for (auto owner : affected) pump(owner);
  }

  void finalize() {
    for (std::size_t i = 0; i < peers_.size(); ++i) {
      auto& o = outcome_.peers[i];
      const auto& r = rt_[i];
      o.n_final = r.placement.n();
      if (r.phase == Phase::kBackingUp) o.unfinished_backup_at_horizon = true;
      if (r.phase == Phase::kRestoring) o.unfinished_restore_at_horizon = true;
    }
  }

  PolicyConfig config_;
  Policy policy_;
  std::span<const PeerProfile> peers_;
  SimulationOptions options_;
  Seconds horizon_ = 0.0;
  int k_ = 0;
  Bytes fragment_ = 0.0;
  Seconds timeout_ = 0.0;
  int n_cap_ = 0;
  std::mt19937_64 death_rng_;
  std::mt19937_64 placement_rng_;

  std::vector<PeerRuntime> rt_;
  std::vector<BytesPerSecond> uplink_, downlink_, holder_rate_;
  std::vector<Seconds> sigma2_;
  std::vector<char> can_send_, can_receive_;

  std::vector<Transfer> transfers_;  // indexed by id; closed ones stay with live = false
  std::uint64_t next_transfer_id_ = 0;
  std::set<std::uint64_t> active_set_;
  std::vector<std::uint64_t> active_;  // active_set_ as of the last reallocation
  std::vector<std::uint64_t> due_;
  std::vector<std::size_t> candidates_;
  std::optional<std::pair<Seconds, std::uint64_t>> next_completion_;
  BandwidthAllocator allocator_;
  std::vector<FlowDemand> flows_;
  std::vector<BytesPerSecond> rates_;
  bool dirty_ = false;
  std::set<std::size_t> waiting_;

  std::priority_queue<SimEvent, std::vector<SimEvent>, std::greater<>> queue_;
  Seconds now_ = 0.0;
  SimulationOutcome outcome_;
};

}  // namespace

SimulationOutcome run_simulation(const PolicyConfig& config, Policy policy, std::span<const PeerProfile> peers,
                                 std::uint64_t seed, const SimulationOptions& options) {
  Simulation sim(config, policy, peers, seed, options);
  return sim.run();
}

}  // namespace p2pbackup
