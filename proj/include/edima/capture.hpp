#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "edima/common.hpp"

namespace edima {

namespace tcp_flag {
inline constexpr std::uint8_t kFin = 0x01;
inline constexpr std::uint8_t kSyn = 0x02;
inline constexpr std::uint8_t kRst = 0x04;
inline constexpr std::uint8_t kPsh = 0x08;
inline constexpr std::uint8_t kAck = 0x10;
inline constexpr std::uint8_t kUrg = 0x20;
}  // namespace tcp_flag

inline constexpr std::uint8_t kProtoTcp = 6;
inline constexpr std::uint8_t kProtoUdp = 17;

/// One Ethernet/IPv4 frame reduced to the header fields the detector reads.
/// Ports are 0 unless TCP/UDP, flags are 0 unless TCP.
struct PacketRecord {
  std::int64_t ts_micros = 0;
  Ipv4 src_ip = 0;
  Ipv4 dst_ip = 0;
  std::uint8_t ip_proto = 0;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint8_t tcp_flags = 0;
  std::uint32_t payload_len = 0;

  bool is_syn_probe() const noexcept {
    return ip_proto == kProtoTcp && (tcp_flags & tcp_flag::kSyn) &&
           !(tcp_flags & tcp_flag::kAck);
  }

  friend bool operator==(const PacketRecord&, const PacketRecord&) = default;
};

struct ParseResult {
  std::vector<PacketRecord> records;
  /// Frames that were not IPv4, were truncated, or were non-initial fragments.
  std::size_t skipped = 0;
};

inline constexpr std::uint32_t kPcapMagicMicros = 0xA1B2C3D4;
inline constexpr std::uint32_t kPcapMagicNanos = 0xA1B23C4D;
inline constexpr std::uint32_t kLinkTypeEthernet = 1;
inline constexpr std::size_t kPcapGlobalHeaderLen = 24;

/// Parses a classic pcap byte stream (either byte order, micro- or
/// nanosecond magic). Throws Error{BadMagic, TruncatedHeader,
/// UnsupportedLinkType}.
ParseResult parse_pcap(std::span<const std::byte> bytes);

/// Emits a microsecond pcap in host byte order with Ethernet framing and
/// zero-filled payloads. Throws Error{UnsortedInput} if timestamps decrease
/// and Error{InvalidRecord} for records the format cannot carry.
std::vector<std::byte> write_pcap(std::span<const PacketRecord> records);

ParseResult read_pcap_file(const std::filesystem::path& path);
void write_pcap_file(const std::filesystem::path& path,
                     std::span<const PacketRecord> records);

}  // namespace edima
