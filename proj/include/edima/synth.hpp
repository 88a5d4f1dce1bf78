#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include <nlohmann/json.hpp>

#include "edima/capture.hpp"
#include "edima/common.hpp"

namespace edima {

/// 2023-11-14T22:13:20Z; every generated session starts here.
inline constexpr std::int64_t kDefaultSessionStartMicros = 1'700'000'000'000'000;

/// One infected device probing random addresses.
struct ScanProfile {
  Category category = Category::Telnet;
  double scan_rate_pps = 5.0;
  double repeat_prob = 0.02;  // chance a probe revisits an already probed address
  /// Relative weight per target port; empty means uniform over the
  /// category's port list.
  std::map<std::uint16_t, double> port_weights;
  Ipv4 source_ip = 0xC0A80164;  // 192.168.1.100, the first benign device
};

/// Uninfected devices talking to a small recurring set of endpoints.
struct BenignProfile {
  Category category = Category::Telnet;  // decides which ports count as "target"
  int device_count = 5;
  int dst_pool_size = 20;
  double conn_rate_pps = 2.0;
  double target_port_share = 0.3;
  bool handshake = true;  // emit SYN+ACK / ACK / data after each SYN
};

struct CorpusProfiles {
  BenignProfile benign;
  ScanProfile scan;
};

/// Throws Error{InvalidProfile}.
void validate(const ScanProfile& p);
void validate(const BenignProfile& p);

/// False for RFC1918, loopback, link-local, CGNAT, documentation,
/// benchmarking, multicast, and other reserved blocks.
bool is_routable_scan_target(Ipv4 addr);

std::vector<PacketRecord> synth_benign(const BenignProfile& profile, double duration_s,
                                       std::uint64_t seed,
                                       std::int64_t start_us = kDefaultSessionStartMicros);

/// Scan probes only (single SYNs from the infected device).
std::vector<PacketRecord> synth_scan(const ScanProfile& profile, double duration_s,
                                     std::uint64_t seed,
                                     std::int64_t start_us = kDefaultSessionStartMicros);

/// Benign background merged by timestamp with a scan stream.
std::vector<PacketRecord> synth_malicious(const ScanProfile& scan, const BenignProfile& benign,
                                          double duration_s, std::uint64_t seed,
                                          std::int64_t start_us = kDefaultSessionStartMicros);

/// Session generator used by build_corpus: the profiles' categories are
/// overridden by `category`.
std::vector<PacketRecord> synth_session(Label label, Category category,
                                        const CorpusProfiles& profiles, double duration_s,
                                        std::uint64_t session_seed);

struct CorpusEntry {
  std::string file;  // relative to the corpus directory
  Label label = Label::Benign;
  Category category = Category::Telnet;
  std::uint64_t seed = 0;

  friend bool operator==(const CorpusEntry&, const CorpusEntry&) = default;
};

/// Seed of the `index`-th session (benign first, then malicious).
std::uint64_t corpus_session_seed(std::uint64_t master_seed, std::size_t index);

/// Writes <outdir>/<label>_<i>.pcap for every session and
/// <outdir>/labels.jsonl. Output is independent of `workers`.
std::vector<CorpusEntry> build_corpus(std::size_t n_benign, std::size_t n_malicious,
                                      Category category, const CorpusProfiles& profiles,
                                      double duration_s, std::uint64_t master_seed,
                                      const std::filesystem::path& outdir,
                                      unsigned workers = 1);

nlohmann::json to_json(const CorpusEntry& e);
std::vector<CorpusEntry> read_labels(const std::filesystem::path& labels_jsonl);

/// Overlays the keys present in `j` onto `base`. Throws Error{InvalidProfile}.
CorpusProfiles profiles_from_json(const nlohmann::json& j, CorpusProfiles base = {});
nlohmann::json to_json(const CorpusProfiles& p);

}  // namespace edima
