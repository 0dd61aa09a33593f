#include "p2pbackup/bandwidth.hpp"

#include <algorithm>
#include <functional>
#include <stdexcept>

namespace p2pbackup {

std::vector<BytesPerSecond> allocate_bandwidth(std::span<const FlowDemand> flows, std::span<const BytesPerSecond> uplink,
                                               std::span<const BytesPerSecond> downlink) {
  BandwidthAllocator allocator;
  std::vector<BytesPerSecond> rates;
  allocator.allocate(flows, uplink, downlink, rates);
  return rates;
}

void BandwidthAllocator::allocate(std::span<const FlowDemand> flows, std::span<const BytesPerSecond> uplink,
                                  std::span<const BytesPerSecond> downlink, std::vector<BytesPerSecond>& rates) {
  const std::size_t peers = uplink.size();
  if (downlink.size() != peers) throw std::invalid_argument("uplink and downlink tables differ in size");
  rates.assign(flows.size(), 0.0);
  if (flows.empty()) return;

  // Peer link l < peers is the uplink of peer l, peers + l its downlink.
  if (slot_stamp_.size() != 2 * peers) {
    slot_stamp_.assign(2 * peers, 0);
    slot_.assign(2 * peers, 0);
    stamp_ = 0;
  }
  if (++stamp_ == 0) {
    std::fill(slot_stamp_.begin(), slot_stamp_.end(), 0);
    stamp_ = 1;
  }
  capacity_.clear();
  offset_.assign(1, 0);
  flow_link_.resize(2 * flows.size());
  auto slot_of = [&](std::size_t peer_link) {
    if (slot_stamp_[peer_link] != stamp_) {
      slot_stamp_[peer_link] = stamp_;
      slot_[peer_link] = static_cast<std::uint32_t>(capacity_.size());
      capacity_.push_back(peer_link < peers ? uplink[peer_link] : downlink[peer_link - peers]);
      offset_.push_back(0);
    }
    return static_cast<std::size_t>(slot_[peer_link]);
  };
  for (std::size_t i = 0; i < flows.size(); ++i) {
    const auto& f = flows[i];
    if (f.source >= peers || f.destination >= peers) throw std::out_of_range("flow endpoint out of range");
    flow_link_[2 * i] = slot_of(f.source);
    flow_link_[2 * i + 1] = slot_of(peers + f.destination);
    ++offset_[flow_link_[2 * i] + 1];
    ++offset_[flow_link_[2 * i + 1] + 1];
  }
  const std::size_t links = capacity_.size();
  for (std::size_t l = 0; l < links; ++l) offset_[l + 1] += offset_[l];
  members_.resize(offset_.back());
  fill_.assign(offset_.begin(), offset_.end());
  for (std::size_t i = 0; i < flows.size(); ++i) {
    members_[fill_[flow_link_[2 * i]]++] = i;
    members_[fill_[flow_link_[2 * i + 1]]++] = i;
  }

  used_.assign(links, 0.0);
  unfrozen_.resize(links);
  version_.assign(links, 0);
  frozen_.assign(flows.size(), 0);
  auto level = [&](std::size_t l) {
    return std::max(0.0, capacity_[l] - used_[l]) / static_cast<double>(unfrozen_[l]);
  };

  heap_.clear();
  for (std::size_t l = 0; l < links; ++l) {
    unfrozen_[l] = offset_[l + 1] - offset_[l];
    heap_.push_back({level(l), l, 0});
  }
  std::make_heap(heap_.begin(), heap_.end(), std::greater<>());

  // Every unfrozen flow runs at the current water level; the link with the
  // lowest saturation level freezes its flows next.
  while (!heap_.empty()) {
    std::pop_heap(heap_.begin(), heap_.end(), std::greater<>());
    const HeapEntry top = heap_.back();
    heap_.pop_back();
    const std::size_t l = top.link;
    if (top.version != version_[l] || unfrozen_[l] == 0) continue;
    for (std::size_t m = offset_[l]; m < offset_[l + 1]; ++m) {
      const std::size_t f = members_[m];
      if (frozen_[f]) continue;
      frozen_[f] = 1;
      rates[f] = top.level;
      const std::size_t other = flow_link_[2 * f] == l ? flow_link_[2 * f + 1] : flow_link_[2 * f];
      used_[l] += top.level;
      --unfrozen_[l];
      used_[other] += top.level;
      --unfrozen_[other];
      if (unfrozen_[other] > 0) {
        heap_.push_back({level(other), other, ++version_[other]});
        std::push_heap(heap_.begin(), heap_.end(), std::greater<>());
      }
    }
    ++version_[l];
  }
}

BytesPerSecond allocation_overshoot(std::span<const FlowDemand> flows, std::span<const BytesPerSecond> rates,
                                    std::span<const BytesPerSecond> uplink, std::span<const BytesPerSecond> downlink) {
  std::vector<double> out(uplink.size(), 0.0), in(downlink.size(), 0.0);
  for (std::size_t i = 0; i < flows.size(); ++i) {
    out[flows[i].source] += rates[i];
    in[flows[i].destination] += rates[i];
  }
  BytesPerSecond worst = 0.0;
  for (std::size_t p = 0; p < uplink.size(); ++p) {
    worst = std::max(worst, out[p] - uplink[p]);
    worst = std::max(worst, in[p] - downlink[p]);
  }
  return worst;
}

}  // namespace p2pbackup
