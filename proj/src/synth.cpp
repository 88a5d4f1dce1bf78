#include "edima/synth.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_set>

#include "edima/error.hpp"
#include "edima/rng.hpp"
#include "edima/sessionizer.hpp"

namespace edima {

using nlohmann::json;

namespace {

constexpr Ipv4 kDeviceBase = 0xC0A80164;  // 192.168.1.100
constexpr std::uint16_t kEphemeralLow = 49152;
constexpr std::uint16_t kEphemeralCount = 16384;
// Ordinary service ports; none is on any category's target list.
constexpr std::array<std::uint16_t, 5> kBenignOtherPorts = {443, 8443, 8883, 5228, 993};

struct Block {
  Ipv4 base;
  int prefix;
};

constexpr std::array<Block, 15> kReservedBlocks = {{
    {0x00000000, 8},   // 0.0.0.0/8
    {0x0A000000, 8},   // 10/8
    {0x64400000, 10},  // 100.64/10 CGNAT
    {0x7F000000, 8},   // loopback
    {0xA9FE0000, 16},  // link-local
    {0xAC100000, 12},  // 172.16/12
    {0xC0000000, 24},  // 192.0.0/24
    {0xC0000200, 24},  // TEST-NET-1
    {0xC0586300, 24},  // 6to4 relay
    {0xC0A80000, 16},  // 192.168/16
    {0xC6120000, 15},  // benchmarking
    {0xC6336400, 24},  // TEST-NET-2
    {0xCB007100, 24},  // TEST-NET-3
    {0xE0000000, 4},   // multicast
    {0xF0000000, 4},   // reserved + broadcast
}};

Ipv4 random_routable(Rng& rng) {
  for (;;) {
    const auto addr = static_cast<Ipv4>(rng.next() >> 32);
    if (is_routable_scan_target(addr)) return addr;
  }
}

std::uint16_t ephemeral_port(Rng& rng) {
  return static_cast<std::uint16_t>(kEphemeralLow + rng.below(kEphemeralCount));
}

std::int64_t to_micros(double seconds) {
  return static_cast<std::int64_t>(std::floor(seconds * 1e6));
}

void check_duration(double duration_s) {
  if (!(duration_s > 0.0) || !std::isfinite(duration_s))
    throw Error(ErrorCode::InvalidProfile, "duration must be positive");
}

// Chooses scan target ports according to the profile weights.
class PortPicker {
 public:
  explicit PortPicker(const ScanProfile& p) {
    const auto list = default_target_ports(p.category);
    for (auto port : list.ports) {
      double w = 1.0;
      if (!p.port_weights.empty()) {
        auto it = p.port_weights.find(port);
        w = it == p.port_weights.end() ? 0.0 : it->second;
      }
      if (w > 0.0) {
        ports_.push_back(port);
        total_ += w;
        cumulative_.push_back(total_);
      }
    }
  }

  std::uint16_t pick(Rng& rng) const {
    const double u = rng.uniform01() * total_;
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    if (it == cumulative_.end()) --it;
    return ports_[static_cast<std::size_t>(it - cumulative_.begin())];
  }

 private:
  std::vector<std::uint16_t> ports_;
  std::vector<double> cumulative_;
  double total_ = 0.0;
};

std::vector<PacketRecord> merge_by_time(std::vector<PacketRecord> a,
                                        const std::vector<PacketRecord>& b) {
  std::vector<PacketRecord> out;
  out.reserve(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out),
             [](const PacketRecord& x, const PacketRecord& y) { return x.ts_micros < y.ts_micros; });
  return out;
}

}  // namespace

bool is_routable_scan_target(Ipv4 addr) {
  for (const auto& b : kReservedBlocks) {
    const Ipv4 mask = b.prefix == 0 ? 0 : ~Ipv4{0} << (32 - b.prefix);
    if ((addr & mask) == b.base) return false;
  }
  return true;
}

void validate(const ScanProfile& p) {
  if (!(p.scan_rate_pps > 0.0) || !std::isfinite(p.scan_rate_pps))
    throw Error(ErrorCode::InvalidProfile, "scan_rate_pps must be positive");
  if (!(p.repeat_prob >= 0.0 && p.repeat_prob <= 0.5))
    throw Error(ErrorCode::InvalidProfile, "repeat_prob must be in [0, 0.5]");
  if (!p.port_weights.empty()) {
    const auto list = default_target_ports(p.category);
    double total = 0.0;
    for (const auto& [port, w] : p.port_weights) {
      if (!list.contains(port))
        throw Error(ErrorCode::InvalidProfile,
                    "port " + std::to_string(port) + " is not a " +
                        std::string(to_string(p.category)) + " target port");
      if (!(w >= 0.0) || !std::isfinite(w))
        throw Error(ErrorCode::InvalidProfile, "port weights must be non-negative");
      total += w;
    }
    if (!(total > 0.0)) throw Error(ErrorCode::InvalidProfile, "port weights sum to zero");
  }
}

void validate(const BenignProfile& p) {
  if (p.device_count < 1 || p.device_count > 100)
    throw Error(ErrorCode::InvalidProfile, "device_count must be in [1, 100]");
  if (p.dst_pool_size < 1) throw Error(ErrorCode::InvalidProfile, "dst_pool_size must be >= 1");
  if (!(p.conn_rate_pps > 0.0) || !std::isfinite(p.conn_rate_pps))
    throw Error(ErrorCode::InvalidProfile, "conn_rate_pps must be positive");
  if (!(p.target_port_share >= 0.0 && p.target_port_share <= 1.0))
    throw Error(ErrorCode::InvalidProfile, "target_port_share must be in [0, 1]");
}

std::vector<PacketRecord> synth_benign(const BenignProfile& profile, double duration_s,
                                       std::uint64_t seed, std::int64_t start_us) {
  validate(profile);
  check_duration(duration_s);
  Rng rng(seed);

  std::vector<Ipv4> pool;
  std::unordered_set<Ipv4> seen;
  while (pool.size() < static_cast<std::size_t>(profile.dst_pool_size)) {
    const auto a = random_routable(rng);
    if (seen.insert(a).second) pool.push_back(a);
  }
  const auto targets = default_target_ports(profile.category);
  std::vector<std::uint16_t> target_ports(targets.ports.begin(), targets.ports.end());

  const std::int64_t end_us = start_us + to_micros(duration_s);
  std::vector<PacketRecord> out;
  double t = rng.exponential(profile.conn_rate_pps);
  while (t < duration_s) {
    const std::int64_t ts = start_us + to_micros(t);
    const Ipv4 device = kDeviceBase + static_cast<Ipv4>(rng.below(profile.device_count));
    const Ipv4 server = pool[rng.below(pool.size())];
    const std::uint16_t dport =
        rng.bernoulli(profile.target_port_share)
            ? target_ports[rng.below(target_ports.size())]
            : kBenignOtherPorts[rng.below(kBenignOtherPorts.size())];
    const std::uint16_t sport = ephemeral_port(rng);

    out.push_back({ts, device, server, kProtoTcp, sport, dport, tcp_flag::kSyn, 0});
    if (profile.handshake) {
      const std::int64_t rtt = 5'000 + static_cast<std::int64_t>(rng.below(45'000));
      const auto payload = static_cast<std::uint32_t>(100 + rng.below(1300));
      const PacketRecord dressing[] = {
          {ts + rtt, server, device, kProtoTcp, dport, sport,
           tcp_flag::kSyn | tcp_flag::kAck, 0},
          {ts + rtt + 200, device, server, kProtoTcp, sport, dport, tcp_flag::kAck, 0},
          {ts + rtt + 400, device, server, kProtoTcp, sport, dport,
           tcp_flag::kPsh | tcp_flag::kAck, payload},
      };
      for (const auto& p : dressing) {
        if (p.ts_micros < end_us) out.push_back(p);
      }
    }
    t += rng.exponential(profile.conn_rate_pps);
  }
  std::stable_sort(out.begin(), out.end(), [](const PacketRecord& a, const PacketRecord& b) {
    return a.ts_micros < b.ts_micros;
  });
  return out;
}

std::vector<PacketRecord> synth_scan(const ScanProfile& profile, double duration_s,
                                     std::uint64_t seed, std::int64_t start_us) {
  validate(profile);
  check_duration(duration_s);
  Rng rng(seed);
  const PortPicker ports(profile);

  std::vector<Ipv4> probed;
  std::vector<PacketRecord> out;
  double t = rng.exponential(profile.scan_rate_pps);
  while (t < duration_s) {
    Ipv4 dst;
    if (!probed.empty() && rng.bernoulli(profile.repeat_prob)) {
      dst = probed[rng.below(probed.size())];
    } else {
      dst = random_routable(rng);
      probed.push_back(dst);
    }
    out.push_back({start_us + to_micros(t), profile.source_ip, dst, kProtoTcp,
                   ephemeral_port(rng), ports.pick(rng), tcp_flag::kSyn, 0});
    t += rng.exponential(profile.scan_rate_pps);
  }
  return out;
}

std::vector<PacketRecord> synth_malicious(const ScanProfile& scan, const BenignProfile& benign,
                                          double duration_s, std::uint64_t seed,
                                          std::int64_t start_us) {
  validate(scan);
  validate(benign);
  auto background = synth_benign(benign, duration_s, derive_seed(seed, 0), start_us);
  const auto probes = synth_scan(scan, duration_s, derive_seed(seed, 1), start_us);
  return merge_by_time(std::move(background), probes);
}

std::vector<PacketRecord> synth_session(Label label, Category category,
                                        const CorpusProfiles& profiles, double duration_s,
                                        std::uint64_t session_seed) {
  auto benign = profiles.benign;
  benign.category = category;
  if (label == Label::Benign) return synth_benign(benign, duration_s, session_seed);
  auto scan = profiles.scan;
  scan.category = category;
  return synth_malicious(scan, benign, duration_s, session_seed);
}

std::uint64_t corpus_session_seed(std::uint64_t master_seed, std::size_t index) {
  return derive_seed(master_seed, index);
}

std::vector<CorpusEntry> build_corpus(std::size_t n_benign, std::size_t n_malicious,
                                      Category category, const CorpusProfiles& profiles,
                                      double duration_s, std::uint64_t master_seed,
                                      const std::filesystem::path& outdir, unsigned workers) {
  {
    auto b = profiles.benign;
    b.category = category;
    validate(b);
    auto s = profiles.scan;
    s.category = category;
    validate(s);
    check_duration(duration_s);
  }
  std::filesystem::create_directories(outdir);

  std::vector<CorpusEntry> entries;
  for (std::size_t i = 0; i < n_benign + n_malicious; ++i) {
    const bool benign = i < n_benign;
    CorpusEntry e;
    e.label = benign ? Label::Benign : Label::Malicious;
    e.category = category;
    e.seed = corpus_session_seed(master_seed, i);
    e.file = std::string(to_string(e.label)) + "_" +
             std::to_string(benign ? i : i - n_benign) + ".pcap";
    entries.push_back(std::move(e));
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&] {
    for (std::size_t i = next++; i < entries.size(); i = next++) {
      try {
        const auto& e = entries[i];
        write_pcap_file(outdir / e.file,
                        synth_session(e.label, category, profiles, duration_s, e.seed));
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 1; w < std::max(1u, workers); ++w) pool.emplace_back(work);
    work();
  }
  if (failure) std::rethrow_exception(failure);

  std::ofstream labels(outdir / "labels.jsonl", std::ios::trunc);
  if (!labels) throw Error(ErrorCode::Io, "cannot create labels.jsonl in " + outdir.string());
  for (const auto& e : entries) labels << to_json(e).dump() << '\n';
  return entries;
}

json to_json(const CorpusEntry& e) {
  return {{"file", e.file},
          {"label", to_string(e.label)},
          {"category", to_string(e.category)},
          {"seed", e.seed}};
}

std::vector<CorpusEntry> read_labels(const std::filesystem::path& labels_jsonl) {
  std::ifstream in(labels_jsonl);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + labels_jsonl.string());
  std::vector<CorpusEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json j = json::parse(line);
      CorpusEntry e;
      e.file = j.at("file").get<std::string>();
      auto l = parse_label(j.at("label").get<std::string>());
      auto c = parse_category(j.at("category").get<std::string>());
      if (!l || !c) throw RowError(ErrorCode::MalformedRow, lineno, "unknown label or category");
      e.label = *l;
      e.category = *c;
      e.seed = j.value("seed", std::uint64_t{0});
      out.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw RowError(ErrorCode::MalformedRow, lineno, ex.what());
    }
  }
  return out;
}

CorpusProfiles profiles_from_json(const json& j, CorpusProfiles base) {
  try {
    if (!j.is_object()) throw Error(ErrorCode::InvalidProfile, "profile config must be an object");
    if (auto it = j.find("benign"); it != j.end()) {
      auto& b = base.benign;
      b.device_count = it->value("device_count", b.device_count);
      b.dst_pool_size = it->value("dst_pool_size", b.dst_pool_size);
      b.conn_rate_pps = it->value("conn_rate_pps", b.conn_rate_pps);
      b.target_port_share = it->value("target_port_share", b.target_port_share);
      b.handshake = it->value("handshake", b.handshake);
    }
    if (auto it = j.find("scan"); it != j.end()) {
      auto& s = base.scan;
      s.scan_rate_pps = it->value("scan_rate_pps", s.scan_rate_pps);
      s.repeat_prob = it->value("repeat_prob", s.repeat_prob);
      if (auto ip = it->find("source_ip"); ip != it->end()) {
        auto parsed = parse_ipv4(ip->get<std::string>());
        if (!parsed) throw Error(ErrorCode::InvalidProfile, "scan.source_ip is not an IPv4 address");
        s.source_ip = *parsed;
      }
      if (auto pw = it->find("port_weights"); pw != it->end()) {
        s.port_weights.clear();
        for (const auto& [port, w] : pw->items()) {
          const int p = std::stoi(port);
          if (p < 0 || p > 65535) throw Error(ErrorCode::InvalidProfile, "port out of range");
          s.port_weights[static_cast<std::uint16_t>(p)] = w.get<double>();
        }
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidProfile, e.what());
  } catch (const std::invalid_argument&) {
    throw Error(ErrorCode::InvalidProfile, "port_weights keys must be port numbers");
  }
  validate(base.benign);
  // Port membership depends on the category, which callers may still
  // override; synth_session checks it once the category is final.
  auto scan = base.scan;
  scan.port_weights.clear();
  validate(scan);
  return base;
}

json to_json(const CorpusProfiles& p) {
  json weights = json::object();
  for (const auto& [port, w] : p.scan.port_weights) weights[std::to_string(port)] = w;
  return {{"benign",
           {{"device_count", p.benign.device_count},
            {"dst_pool_size", p.benign.dst_pool_size},
            {"conn_rate_pps", p.benign.conn_rate_pps},
            {"target_port_share", p.benign.target_port_share},
            {"handshake", p.benign.handshake}}},
          {"scan",
           {{"scan_rate_pps", p.scan.scan_rate_pps},
            {"repeat_prob", p.scan.repeat_prob},
            {"source_ip", ipv4_to_string(p.scan.source_ip)},
            {"port_weights", weights}}}};
}

}  // namespace edima
