#include "edima/capture.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "edima/error.hpp"

namespace edima {

namespace {

constexpr std::size_t kRecordHeaderLen = 16;
constexpr std::size_t kEthHeaderLen = 14;
constexpr std::size_t kIpv4HeaderLen = 20;
constexpr std::size_t kTcpHeaderLen = 20;
constexpr std::size_t kUdpHeaderLen = 8;
constexpr std::uint16_t kEtherTypeIpv4 = 0x0800;
constexpr std::uint16_t kEtherTypeVlan = 0x8100;
constexpr std::uint32_t kSnapLen = 65535;

constexpr std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xFF00) | ((v << 8) & 0xFF0000) | (v << 24);
}

std::uint32_t load_u32(const std::byte* p, bool swap) {
  std::uint32_t v;
  std::memcpy(&v, p, sizeof v);
  return swap ? byteswap32(v) : v;
}

std::uint16_t load_be16(const std::byte* p) {
  return static_cast<std::uint16_t>((std::to_integer<unsigned>(p[0]) << 8) |
                                    std::to_integer<unsigned>(p[1]));
}

std::uint32_t load_be32(const std::byte* p) {
  return (std::uint32_t{load_be16(p)} << 16) | load_be16(p + 2);
}

// Decodes one captured frame; nullopt means "skip".
std::optional<PacketRecord> decode_frame(std::span<const std::byte> frame,
                                         std::int64_t ts_micros) {
  if (frame.size() < kEthHeaderLen) return std::nullopt;
  std::size_t off = 12;
  std::uint16_t ether_type = load_be16(frame.data() + off);
  off += 2;
  if (ether_type == kEtherTypeVlan) {
    if (frame.size() < off + 4) return std::nullopt;
    ether_type = load_be16(frame.data() + off + 2);
    off += 4;
  }
  if (ether_type != kEtherTypeIpv4) return std::nullopt;

  auto ip = frame.subspan(off);
  if (ip.size() < kIpv4HeaderLen) return std::nullopt;
  const unsigned ver_ihl = std::to_integer<unsigned>(ip[0]);
  if ((ver_ihl >> 4) != 4) return std::nullopt;
  const std::size_t ihl = (ver_ihl & 0x0F) * 4u;
  if (ihl < kIpv4HeaderLen || ip.size() < ihl) return std::nullopt;
  const std::size_t total_len = load_be16(ip.data() + 2);
  if (total_len < ihl) return std::nullopt;
  if ((load_be16(ip.data() + 6) & 0x1FFF) != 0) return std::nullopt;

  PacketRecord rec;
  rec.ts_micros = ts_micros;
  rec.ip_proto = std::to_integer<std::uint8_t>(ip[9]);
  rec.src_ip = load_be32(ip.data() + 12);
  rec.dst_ip = load_be32(ip.data() + 16);

  auto l4 = ip.subspan(ihl);
  std::size_t l4_header = 0;
  if (rec.ip_proto == kProtoTcp) {
    if (l4.size() < kTcpHeaderLen) return std::nullopt;
    l4_header = (std::to_integer<unsigned>(l4[12]) >> 4) * 4u;
    if (l4_header < kTcpHeaderLen) return std::nullopt;
    rec.src_port = load_be16(l4.data());
    rec.dst_port = load_be16(l4.data() + 2);
    rec.tcp_flags = std::to_integer<std::uint8_t>(l4[13]);
  } else if (rec.ip_proto == kProtoUdp) {
    if (l4.size() < kUdpHeaderLen) return std::nullopt;
    l4_header = kUdpHeaderLen;
    rec.src_port = load_be16(l4.data());
    rec.dst_port = load_be16(l4.data() + 2);
  }
  if (total_len < ihl + l4_header) return std::nullopt;
  rec.payload_len = static_cast<std::uint32_t>(total_len - ihl - l4_header);
  return rec;
}

template <typename T>
void append_native(std::vector<std::byte>& out, T v) {
  const auto* p = reinterpret_cast<const std::byte*>(&v);
  out.insert(out.end(), p, p + sizeof v);
}

void put_be16(std::byte* p, std::uint16_t v) {
  p[0] = std::byte(v >> 8);
  p[1] = std::byte(v & 0xFF);
}

void put_be32(std::byte* p, std::uint32_t v) {
  put_be16(p, static_cast<std::uint16_t>(v >> 16));
  put_be16(p + 2, static_cast<std::uint16_t>(v & 0xFFFF));
}

std::uint16_t ipv4_checksum(const std::byte* hdr) {
  std::uint32_t sum = 0;
  for (std::size_t i = 0; i < kIpv4HeaderLen; i += 2) sum += load_be16(hdr + i);
  while (sum >> 16) sum = (sum & 0xFFFF) + (sum >> 16);
  return static_cast<std::uint16_t>(~sum);
}

void validate_for_write(const PacketRecord& r, std::size_t index) {
  auto fail = [&](const char* why) {
    throw Error(ErrorCode::InvalidRecord,
                "record " + std::to_string(index) + ": " + why);
  };
  if (r.ts_micros < 0 || r.ts_micros / 1'000'000 > 0xFFFFFFFFLL)
    fail("timestamp outside the pcap range");
  const bool has_ports = r.ip_proto == kProtoTcp || r.ip_proto == kProtoUdp;
  if (!has_ports && (r.src_port != 0 || r.dst_port != 0))
    fail("ports set on a non-TCP/UDP record");
  if (r.ip_proto != kProtoTcp && r.tcp_flags != 0)
    fail("TCP flags set on a non-TCP record");
  const std::size_t l4 = r.ip_proto == kProtoTcp   ? kTcpHeaderLen
                         : r.ip_proto == kProtoUdp ? kUdpHeaderLen
                                                   : 0;
  if (kIpv4HeaderLen + l4 + r.payload_len > 0xFFFF)
    fail("payload does not fit in one IPv4 datagram");
}

}  // namespace

ParseResult parse_pcap(std::span<const std::byte> bytes) {
  if (bytes.size() < kPcapGlobalHeaderLen)
    throw Error(ErrorCode::TruncatedHeader,
                "pcap is " + std::to_string(bytes.size()) +
                    " bytes, global header needs 24");

  const std::uint32_t raw_magic = load_u32(bytes.data(), false);
  bool swap = false;
  bool nanos = false;
  if (raw_magic == kPcapMagicMicros || raw_magic == kPcapMagicNanos) {
    nanos = raw_magic == kPcapMagicNanos;
  } else if (byteswap32(raw_magic) == kPcapMagicMicros ||
             byteswap32(raw_magic) == kPcapMagicNanos) {
    swap = true;
    nanos = byteswap32(raw_magic) == kPcapMagicNanos;
  } else {
    throw Error(ErrorCode::BadMagic, "unrecognized pcap magic");
  }
  const std::uint32_t link_type = load_u32(bytes.data() + 20, swap);
  if (link_type != kLinkTypeEthernet)
    throw Error(ErrorCode::UnsupportedLinkType,
                "link type " + std::to_string(link_type) + " is not Ethernet");

  ParseResult result;
  std::size_t pos = kPcapGlobalHeaderLen;
  while (pos < bytes.size()) {
    if (bytes.size() - pos < kRecordHeaderLen) {
      ++result.skipped;
      break;
    }
    const std::byte* hdr = bytes.data() + pos;
    const std::int64_t ts_sec = load_u32(hdr, swap);
    const std::int64_t ts_frac = load_u32(hdr + 4, swap);
    const std::size_t incl_len = load_u32(hdr + 8, swap);
    pos += kRecordHeaderLen;
    if (incl_len > bytes.size() - pos) {
      ++result.skipped;
      break;
    }
    const std::int64_t ts = ts_sec * 1'000'000 + (nanos ? ts_frac / 1000 : ts_frac);
    if (auto rec = decode_frame(bytes.subspan(pos, incl_len), ts)) {
      result.records.push_back(*rec);
    } else {
      ++result.skipped;
    }
    pos += incl_len;
  }
  return result;
}

std::vector<std::byte> write_pcap(std::span<const PacketRecord> records) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (i > 0 && records[i].ts_micros < records[i - 1].ts_micros)
      throw Error(ErrorCode::UnsortedInput,
                  "record " + std::to_string(i) + " has timestamp " +
                      std::to_string(records[i].ts_micros) + " < " +
                      std::to_string(records[i - 1].ts_micros));
    validate_for_write(records[i], i);
  }

  std::vector<std::byte> out;
  out.reserve(kPcapGlobalHeaderLen + records.size() * 80);
  append_native<std::uint32_t>(out, kPcapMagicMicros);
  append_native<std::uint16_t>(out, 2);
  append_native<std::uint16_t>(out, 4);
  append_native<std::int32_t>(out, 0);   // thiszone
  append_native<std::uint32_t>(out, 0);  // sigfigs
  append_native<std::uint32_t>(out, kSnapLen);
  append_native<std::uint32_t>(out, kLinkTypeEthernet);

  std::vector<std::byte> frame;
  for (const auto& r : records) {
    const std::size_t l4 = r.ip_proto == kProtoTcp   ? kTcpHeaderLen
                           : r.ip_proto == kProtoUdp ? kUdpHeaderLen
                                                     : 0;
    const std::size_t ip_total = kIpv4HeaderLen + l4 + r.payload_len;
    frame.assign(kEthHeaderLen + ip_total, std::byte{0});

    // Locally administered placeholder MACs; nothing downstream reads them.
    frame[0] = std::byte{0x02};
    frame[5] = std::byte{0x02};
    frame[6] = std::byte{0x02};
    frame[11] = std::byte{0x01};
    put_be16(frame.data() + 12, kEtherTypeIpv4);

    std::byte* ip = frame.data() + kEthHeaderLen;
    ip[0] = std::byte{0x45};
    put_be16(ip + 2, static_cast<std::uint16_t>(ip_total));
    put_be16(ip + 6, 0x4000);  // DF
    ip[8] = std::byte{64};
    ip[9] = std::byte{r.ip_proto};
    put_be32(ip + 12, r.src_ip);
    put_be32(ip + 16, r.dst_ip);
    put_be16(ip + 10, ipv4_checksum(ip));

    std::byte* seg = ip + kIpv4HeaderLen;
    if (r.ip_proto == kProtoTcp) {
      put_be16(seg, r.src_port);
      put_be16(seg + 2, r.dst_port);
      seg[12] = std::byte{(kTcpHeaderLen / 4) << 4};
      seg[13] = std::byte{r.tcp_flags};
      put_be16(seg + 14, 0xFFFF);
    } else if (r.ip_proto == kProtoUdp) {
      put_be16(seg, r.src_port);
      put_be16(seg + 2, r.dst_port);
      put_be16(seg + 4, static_cast<std::uint16_t>(kUdpHeaderLen + r.payload_len));
    }

    append_native<std::uint32_t>(out, static_cast<std::uint32_t>(r.ts_micros / 1'000'000));
    append_native<std::uint32_t>(out, static_cast<std::uint32_t>(r.ts_micros % 1'000'000));
    append_native<std::uint32_t>(out, static_cast<std::uint32_t>(frame.size()));
    append_native<std::uint32_t>(out, static_cast<std::uint32_t>(frame.size()));
    out.insert(out.end(), frame.begin(), frame.end());
  }
  return out;
}

ParseResult read_pcap_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
  return parse_pcap(std::as_bytes(std::span(buf)));
}

void write_pcap_file(const std::filesystem::path& path,
                     std::span<const PacketRecord> records) {
  const auto bytes = write_pcap(records);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

}  // namespace edima
