#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "edima/error.hpp"
#include "edima/features.hpp"
#include "edima/rng.hpp"
#include "edima/synth.hpp"

namespace edima {
namespace {

namespace fs = std::filesystem;

constexpr double kDuration = 900.0;

FeatureVector filtered_features(const std::vector<PacketRecord>& recs, Category cat) {
  TrafficSession s;
  s.packets = recs;
  return extract_features(filter_session(s, default_target_ports(cat)), cat);
}

BenignProfile benign_for(Category cat) {
  BenignProfile b;
  b.category = cat;
  return b;
}

ScanProfile scan_for(Category cat) {
  ScanProfile s;
  s.category = cat;
  return s;
}

TEST(SynthBenign, DestinationsComeFromPool) {
  const auto recs = synth_benign({}, kDuration, 1);
  std::set<Ipv4> syn_dsts;
  for (const auto& r : recs)
    if (r.tcp_flags == tcp_flag::kSyn) syn_dsts.insert(r.dst_ip);
  EXPECT_LE(syn_dsts.size(), 20u);
  EXPECT_LE(filtered_features(recs, Category::Telnet).f1_unique_dsts, 20u);
}

TEST(SynthBenign, Deterministic) {
  EXPECT_EQ(synth_benign({}, kDuration, 9), synth_benign({}, kDuration, 9));
  EXPECT_NE(synth_benign({}, kDuration, 9), synth_benign({}, kDuration, 10));
}

TEST(SynthBenign, TelnetSessionsRepeatDestinations) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto fv = filtered_features(synth_benign({}, kDuration, seed), Category::Telnet);
    EXPECT_GT(fv.f4_mean_pkts_per_dst, 3.0) << seed;
  }
}

TEST(SynthBenign, StaysInsideWindowAndSorted) {
  const auto recs = synth_benign({}, kDuration, 4);
  ASSERT_FALSE(recs.empty());
  EXPECT_TRUE(std::is_sorted(recs.begin(), recs.end(),
                             [](auto& a, auto& b) { return a.ts_micros < b.ts_micros; }));
  EXPECT_GE(recs.front().ts_micros, kDefaultSessionStartMicros);
  EXPECT_LT(recs.back().ts_micros, kDefaultSessionStartMicros + 900'000'000);
}

TEST(SynthBenign, HttpGetTrafficReachesPort80) {
  const auto fv = filtered_features(synth_benign(benign_for(Category::HttpGet), kDuration, 2),
                                    Category::HttpGet);
  EXPECT_GT(fv.f1_unique_dsts, 0u);
}

TEST(SynthScan, UniqueProbeShare) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto scan = scan_for(Category::Telnet);
    const auto benign = benign_for(Category::Telnet);
    const auto probes = synth_scan(scan, kDuration, derive_seed(seed, 1));
    const auto merged = synth_malicious(scan, benign, kDuration, seed);
    const auto fv = filtered_features(merged, Category::Telnet);
    EXPECT_GE(static_cast<double>(fv.f1_unique_dsts), 0.95 * static_cast<double>(probes.size()))
        << seed;
  }
}

TEST(SynthScan, MaliciousIsBenignPlusScan) {
  const auto scan = scan_for(Category::HttpPost);
  const auto benign = benign_for(Category::HttpPost);
  const auto merged = synth_malicious(scan, benign, kDuration, 5);
  auto expected = synth_benign(benign, kDuration, derive_seed(5, 0));
  const auto probes = synth_scan(scan, kDuration, derive_seed(5, 1));
  expected.insert(expected.end(), probes.begin(), probes.end());
  std::stable_sort(expected.begin(), expected.end(),
                   [](auto& a, auto& b) { return a.ts_micros < b.ts_micros; });
  EXPECT_EQ(merged.size(), expected.size());
  auto key = [](const PacketRecord& r) {
    return std::tuple(r.ts_micros, r.src_ip, r.dst_ip, r.src_port, r.dst_port, r.tcp_flags);
  };
  std::multiset<decltype(key(merged[0]))> a, b;
  for (const auto& r : merged) a.insert(key(r));
  for (const auto& r : expected) b.insert(key(r));
  EXPECT_EQ(a, b);
}

TEST(SynthScan, RateContract) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto probes = synth_scan(scan_for(Category::Telnet), kDuration, seed);
    TrafficSession s;
    s.packets = probes;
    const auto kept = filter_session(s, default_target_ports(Category::Telnet)).packets.size();
    EXPECT_GE(kept, 4050u) << seed;
    EXPECT_LE(kept, 4950u) << seed;
  }
}

TEST(SynthScan, HttpGetAlwaysPort80) {
  for (const auto& r : synth_scan(scan_for(Category::HttpGet), kDuration, 3)) EXPECT_EQ(r.dst_port, 80);
}

TEST(SynthScan, PortWeightsRespected) {
  auto scan = scan_for(Category::Telnet);
  scan.port_weights = {{23, 1.0}, {2323, 0.0}};
  for (const auto& r : synth_scan(scan, 100, 3)) EXPECT_EQ(r.dst_port, 23);
}

// Independent list of blocks a scan must never hit.
bool reserved(Ipv4 a) {
  struct Block {
    Ipv4 base;
    int prefix;
  };
  static constexpr Block kBlocks[] = {
      {0x00000000, 8},  {0x0A000000, 8},  {0x64400000, 10}, {0x7F000000, 8},
      {0xA9FE0000, 16}, {0xAC100000, 12}, {0xC0000000, 24}, {0xC0000200, 24},
      {0xC0586300, 24}, {0xC0A80000, 16}, {0xC6120000, 15}, {0xC6336400, 24},
      {0xCB007100, 24}, {0xE0000000, 4},  {0xF0000000, 4}};
  for (const auto& b : kBlocks) {
    const Ipv4 mask = b.prefix == 0 ? 0 : ~Ipv4{0} << (32 - b.prefix);
    if ((a & mask) == b.base) return true;
  }
  return false;
}

TEST(SynthScan, NeverTargetsReservedSpace) {
  for (auto cat : kAllCategories)
    for (const auto& r : synth_scan(scan_for(cat), kDuration, 11)) EXPECT_FALSE(reserved(r.dst_ip));
  std::mt19937_64 g(1);
  for (int i = 0; i < 100000; ++i) {
    const auto a = static_cast<Ipv4>(g());
    EXPECT_EQ(is_routable_scan_target(a), !reserved(a)) << ipv4_to_string(a);
  }
  EXPECT_FALSE(is_routable_scan_target(parse_ipv4("255.255.255.255").value()));
  EXPECT_TRUE(is_routable_scan_target(parse_ipv4("8.8.8.8").value()));
}

TEST(SynthScan, MergedStreamSorted) {
  const auto merged = synth_malicious({}, {}, kDuration, 8);
  EXPECT_TRUE(std::is_sorted(merged.begin(), merged.end(),
                             [](auto& a, auto& b) { return a.ts_micros < b.ts_micros; }));
}

TEST(Synth, MaliciousF1DwarfsBenign) {
  for (auto cat : kAllCategories) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      CorpusProfiles p;
      const auto ben = filtered_features(synth_session(Label::Benign, cat, p, kDuration, seed), cat);
      const auto mal =
          filtered_features(synth_session(Label::Malicious, cat, p, kDuration, seed), cat);
      EXPECT_GE(mal.f1_unique_dsts, 10 * std::max<std::uint64_t>(ben.f1_unique_dsts, 1))
          << to_string(cat) << " seed " << seed;
    }
  }
}

TEST(Synth, ProfileValidation) {
  auto expect_bad = [](auto profile) {
    try {
      validate(profile);
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidProfile);
    }
  };
  ScanProfile s;
  s.scan_rate_pps = 0;
  expect_bad(s);
  s = {};
  s.repeat_prob = 0.6;
  expect_bad(s);
  s = {};
  s.port_weights = {{8080, 1.0}};
  expect_bad(s);
  BenignProfile b;
  b.dst_pool_size = 0;
  expect_bad(b);
  b = {};
  b.target_port_share = 1.5;
  expect_bad(b);
  EXPECT_THROW(synth_benign({}, 0.0, 1), Error);
}

TEST(Synth, ProfilesJsonOverlay) {
  const auto p = profiles_from_json(nlohmann::json::parse(R"({"scan": {"scan_rate_pps": 0.5}})"));
  EXPECT_EQ(p.scan.scan_rate_pps, 0.5);
  EXPECT_EQ(p.scan.repeat_prob, 0.02);
  EXPECT_EQ(p.benign.dst_pool_size, 20);
  const auto again = profiles_from_json(to_json(p));
  EXPECT_EQ(to_json(again), to_json(p));
  EXPECT_THROW(profiles_from_json(nlohmann::json::parse(R"({"scan": {"repeat_prob": 0.9}})")),
               Error);
}

// ---------------------------------------------------------------------------
// Corpus

class CorpusTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("edima_corpus_" + std::to_string(std::random_device{}()));
  }
  void TearDown() override { fs::remove_all(root_); }

  static std::map<std::string, std::string> read_dir(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) {
      std::ifstream in(e.path(), std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      out[e.path().filename().string()] = ss.str();
    }
    return out;
  }

  fs::path root_;
};

TEST_F(CorpusTest, SixtySessions) {
  const auto entries = build_corpus(30, 30, Category::Telnet, {}, kDuration, 7, root_, 4);
  ASSERT_EQ(entries.size(), 60u);
  EXPECT_EQ(std::count_if(entries.begin(), entries.end(),
                          [](auto& e) { return e.label == Label::Malicious; }),
            30);
  EXPECT_EQ(read_labels(root_ / "labels.jsonl"), entries);
  std::size_t pcaps = 0;
  for (const auto& e : fs::directory_iterator(root_)) pcaps += e.path().extension() == ".pcap";
  EXPECT_EQ(pcaps, 60u);
  EXPECT_TRUE(fs::exists(root_ / "benign_0.pcap"));
  EXPECT_TRUE(fs::exists(root_ / "malicious_29.pcap"));
  for (std::size_t i = 0; i < entries.size(); ++i)
    EXPECT_EQ(entries[i].seed, corpus_session_seed(7, i));
}

TEST_F(CorpusTest, EmptyCorpus) {
  EXPECT_TRUE(build_corpus(0, 0, Category::Telnet, {}, kDuration, 7, root_).empty());
  ASSERT_TRUE(fs::exists(root_ / "labels.jsonl"));
  EXPECT_EQ(fs::file_size(root_ / "labels.jsonl"), 0u);
}

TEST_F(CorpusTest, ByteIdenticalAcrossRunsAndWorkerCounts) {
  build_corpus(4, 4, Category::HttpPost, {}, 300, 99, root_ / "a", 1);
  build_corpus(4, 4, Category::HttpPost, {}, 300, 99, root_ / "b", 1);
  build_corpus(4, 4, Category::HttpPost, {}, 300, 99, root_ / "c", 8);
  const auto a = read_dir(root_ / "a");
  EXPECT_EQ(a.size(), 9u);
  EXPECT_EQ(a, read_dir(root_ / "b"));
  EXPECT_EQ(a, read_dir(root_ / "c"));
}

}  // namespace
}  // namespace edima
