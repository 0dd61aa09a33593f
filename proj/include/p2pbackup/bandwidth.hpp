#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "p2pbackup/core_model.hpp"

namespace p2pbackup {

/// One active transfer, identified by the peer indices at both ends.
struct FlowDemand {
  std::size_t source = 0;
  std::size_t destination = 0;
};

/// Max-min fair rates under per-peer uplink and downlink caps (progressive
/// filling). `uplink` and `downlink` are indexed by peer.
std::vector<BytesPerSecond> allocate_bandwidth(std::span<const FlowDemand> flows, std::span<const BytesPerSecond> uplink,
                                               std::span<const BytesPerSecond> downlink);

/// Same computation as allocate_bandwidth, keeping scratch buffers between calls.
class BandwidthAllocator {
 public:
  void allocate(std::span<const FlowDemand> flows, std::span<const BytesPerSecond> uplink,
                std::span<const BytesPerSecond> downlink, std::vector<BytesPerSecond>& rates);

 private:
  struct HeapEntry {
    double level;
    std::size_t link;
    std::uint32_t version;
    bool operator>(const HeapEntry& o) const {
      return level != o.level ? level > o.level : link > o.link;
    }
  };
  // Only links carrying a flow are materialised; slot_ maps peer links to them.
  std::vector<std::uint32_t> slot_, slot_stamp_;
  std::uint32_t stamp_ = 0;
  std::vector<std::size_t> flow_link_;  // 2 per flow: uplink slot, downlink slot
  std::vector<std::size_t> offset_, fill_, members_, unfrozen_;
  std::vector<double> used_, capacity_;
  std::vector<std::uint32_t> version_;
  std::vector<char> frozen_;
  std::vector<HeapEntry> heap_;
};

/// Largest amount by which any peer's summed rates exceed one of its caps
/// (0 when the allocation is feasible).
BytesPerSecond allocation_overshoot(std::span<const FlowDemand> flows, std::span<const BytesPerSecond> rates,
                                    std::span<const BytesPerSecond> uplink, std::span<const BytesPerSecond> downlink);

}  // namespace p2pbackup
