#include "edima/sessionizer.hpp"

#include "edima/error.hpp"
#include "edima/rng.hpp"

namespace edima {

TargetPortList default_target_ports(Category category) {
  switch (category) {
    case Category::Telnet: return {category, {23, 2323}};
    case Category::HttpPost: return {category, {37215, 80, 20736, 36895}};
    case Category::HttpGet: return {category, {80}};
  }
  return {category, {}};
}

std::vector<TrafficSession> slice_sessions(std::span<const PacketRecord> records,
                                           const std::string& gateway_id,
                                           std::int64_t window_len_micros) {
  if (window_len_micros <= 0)
    throw Error(ErrorCode::InvalidHyperparams, "window length must be positive");
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].ts_micros < records[i - 1].ts_micros)
      throw Error(ErrorCode::UnsortedInput,
                  "packet " + std::to_string(i) + " is earlier than its predecessor");
  }

  std::vector<TrafficSession> sessions;
  if (records.empty()) return sessions;

  const std::int64_t t0 = records.front().ts_micros;
  const std::int64_t last_window = (records.back().ts_micros - t0) / window_len_micros;
  sessions.resize(static_cast<std::size_t>(last_window) + 1);
  for (std::size_t k = 0; k < sessions.size(); ++k) {
    sessions[k].gateway_id = gateway_id;
    sessions[k].window_start_micros = t0 + static_cast<std::int64_t>(k) * window_len_micros;
    sessions[k].window_len_micros = window_len_micros;
  }
  for (const auto& rec : records) {
    const auto k = static_cast<std::size_t>((rec.ts_micros - t0) / window_len_micros);
    sessions[k].packets.push_back(rec);
  }
  return sessions;
}

TrafficSession filter_session(const TrafficSession& session,
                              const TargetPortList& ports) {
  TrafficSession out;
  out.gateway_id = session.gateway_id;
  out.window_start_micros = session.window_start_micros;
  out.window_len_micros = session.window_len_micros;
  for (const auto& p : session.packets) {
    if (p.is_syn_probe() && ports.contains(p.dst_port)) out.packets.push_back(p);
  }
  return out;
}

TrafficSession subsample(const TrafficSession& session, double p,
                         const std::optional<std::set<Ipv4>>& device_keep,
                         std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0))
    throw Error(ErrorCode::InvalidProbability,
                "sampling probability " + std::to_string(p) + " is outside [0, 1]");

  TrafficSession out;
  out.gateway_id = session.gateway_id;
  out.window_start_micros = session.window_start_micros;
  out.window_len_micros = session.window_len_micros;

  Rng rng(seed);
  for (const auto& pkt : session.packets) {
    if (device_keep && device_keep->count(pkt.src_ip) == 0) continue;
    // One draw per device-surviving packet, so the stream position depends
    // only on how many packets reached this point.
    if (rng.bernoulli(p)) out.packets.push_back(pkt);
  }
  return out;
}

}  // namespace edima
