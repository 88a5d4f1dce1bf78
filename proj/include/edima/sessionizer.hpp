#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "edima/capture.hpp"
#include "edima/common.hpp"

namespace edima {

inline constexpr std::int64_t kDefaultWindowMicros = 900'000'000;  // 15 min

/// Destination ports whose SYNs count as probes for one malware category.
struct TargetPortList {
  Category category = Category::Telnet;
  std::set<std::uint16_t> ports;

  bool contains(std::uint16_t port) const { return ports.count(port) != 0; }
};

/// telnet {23, 2323}; http-post {37215, 80, 20736, 36895}; http-get {80}.
TargetPortList default_target_ports(Category category);

/// All packets of one gateway inside [window_start, window_start + len).
struct TrafficSession {
  std::string gateway_id;
  std::int64_t window_start_micros = 0;
  std::int64_t window_len_micros = kDefaultWindowMicros;
  std::vector<PacketRecord> packets;

  std::int64_t window_end_micros() const {
    return window_start_micros + window_len_micros;
  }
};

/// Tumbling windows anchored at the first packet; empty windows between
/// occupied ones are emitted. Throws Error{UnsortedInput} and
/// Error{InvalidHyperparams} for a non-positive window.
std::vector<TrafficSession> slice_sessions(std::span<const PacketRecord> records,
                                           const std::string& gateway_id,
                                           std::int64_t window_len_micros = kDefaultWindowMicros);

/// Keeps TCP packets with SYN set, ACK clear and a destination port on the
/// list. Window metadata is carried over unchanged.
TrafficSession filter_session(const TrafficSession& session,
                              const TargetPortList& ports);

/// Drops packets whose source is outside `device_keep` (when given), then
/// keeps each survivor with probability `p`. Throws
/// Error{InvalidProbability} unless 0 <= p <= 1.
TrafficSession subsample(const TrafficSession& session, double p,
                         const std::optional<std::set<Ipv4>>& device_keep,
                         std::uint64_t seed);

}  // namespace edima
