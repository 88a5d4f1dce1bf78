#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>

#include "edima/error.hpp"
#include "edima/features.hpp"
#include "test_support.hpp"

namespace edima {
namespace {

// Brute force: explicit destination -> count map, then max/min/mean.
struct Oracle {
  std::uint64_t f1 = 0, f2 = 0, f3 = 0;
  double f4 = 0;
};

Oracle oracle(const TrafficSession& s) {
  std::map<Ipv4, std::uint64_t> counts;
  for (const auto& p : s.packets) counts[p.dst_ip] += 1;
  Oracle o;
  if (counts.empty()) return o;
  o.f1 = counts.size();
  o.f3 = UINT64_MAX;
  std::uint64_t total = 0;
  for (const auto& [dst, c] : counts) {
    o.f2 = std::max(o.f2, c);
    o.f3 = std::min(o.f3, c);
    total += c;
  }
  o.f4 = static_cast<double>(total) / static_cast<double>(o.f1);
  return o;
}

TrafficSession to_dsts(std::initializer_list<Ipv4> dsts) {
  TrafficSession s;
  for (auto d : dsts) {
    PacketRecord r;
    r.dst_ip = d;
    r.ip_proto = kProtoTcp;
    r.dst_port = 23;
    r.tcp_flags = tcp_flag::kSyn;
    s.packets.push_back(r);
  }
  return s;
}

void expect_matches_oracle(const TrafficSession& s) {
  const auto fv = extract_features(s, Category::Telnet);
  const auto o = oracle(s);
  EXPECT_EQ(fv.f1_unique_dsts, o.f1);
  EXPECT_EQ(fv.f2_max_pkts_per_dst, o.f2);
  EXPECT_EQ(fv.f3_min_pkts_per_dst, o.f3);
  EXPECT_DOUBLE_EQ(fv.f4_mean_pkts_per_dst, o.f4);
  EXPECT_TRUE(features_consistent(fv));
}

TEST(Features, RepeatedDestination) {
  const auto fv = extract_features(to_dsts({1, 1, 2}), Category::Telnet);
  EXPECT_EQ(fv.f1_unique_dsts, 2u);
  EXPECT_EQ(fv.f2_max_pkts_per_dst, 2u);
  EXPECT_EQ(fv.f3_min_pkts_per_dst, 1u);
  EXPECT_DOUBLE_EQ(fv.f4_mean_pkts_per_dst, 1.5);
  EXPECT_FALSE(fv.label.has_value());
}

TEST(Features, EmptySessionIsAllZero) {
  const auto fv = extract_features(TrafficSession{}, Category::HttpGet);
  EXPECT_EQ(fv.values(), (std::array<double, 4>{0, 0, 0, 0}));
  EXPECT_EQ(fv.category, Category::HttpGet);
}

TEST(Features, SinglePacket) {
  const auto fv = extract_features(to_dsts({9}), Category::Telnet);
  EXPECT_EQ(fv.values(), (std::array<double, 4>{1, 1, 1, 1.0}));
}

TEST(Features, CarriesSessionReference) {
  auto s = to_dsts({1});
  s.gateway_id = "home-7";
  s.window_start_micros = 123;
  const auto fv = extract_features(s, Category::Telnet);
  EXPECT_EQ(fv.gateway, "home-7");
  EXPECT_EQ(fv.window_start_us, 123);
}

TEST(Features, JsonRoundTrip) {
  auto fv = extract_features(to_dsts({1, 1, 2, 3}), Category::HttpPost);
  fv.gateway = "g";
  fv.window_start_us = 5;
  for (auto label : {std::optional<Label>{}, std::optional{Label::Malicious}}) {
    fv.label = label;
    const auto j = to_json(fv);
    EXPECT_EQ(j.size(), 8u);
    EXPECT_EQ(feature_vector_from_json(j), fv);
  }
  EXPECT_TRUE(to_json(FeatureVector{})["label"].is_null());
}

TEST(Features, JsonRejectsBrokenRows) {
  auto j = to_json(extract_features(to_dsts({1, 1, 2}), Category::Telnet));
  auto expect_bad = [](const nlohmann::json& row) {
    try {
      feature_vector_from_json(row);
      ADD_FAILURE() << row.dump();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::MalformedRow);
    }
  };
  auto missing = j;
  missing.erase("f3");
  expect_bad(missing);
  auto wrong_type = j;
  wrong_type["f1"] = "two";
  expect_bad(wrong_type);
  auto bad_cat = j;
  bad_cat["category"] = "ssh";
  expect_bad(bad_cat);
  auto inconsistent = j;
  inconsistent["f3"] = 5;
  expect_bad(inconsistent);
}

TEST(FeaturesProperty, AgreesWithOracle) {
  std::mt19937_64 g(10);
  for (int trial = 0; trial < 500; ++trial) {
    const auto n = testing::draw(g, 0, 500);
    const auto d = testing::draw(g, 1, 100);
    expect_matches_oracle(testing::random_filtered_session(g, n, d));
  }
}

TEST(FeaturesProperty, PermutationInvariant) {
  std::mt19937_64 g(11);
  for (int trial = 0; trial < 200; ++trial) {
    auto s = testing::random_filtered_session(g, testing::draw(g, 0, 200), testing::draw(g, 1, 40));
    const auto before = extract_features(s, Category::Telnet);
    std::shuffle(s.packets.begin(), s.packets.end(), g);
    EXPECT_EQ(extract_features(s, Category::Telnet), before);
  }
}

TEST(FeaturesProperty, FreshDestinationIncrementsF1) {
  std::mt19937_64 g(12);
  for (int trial = 0; trial < 200; ++trial) {
    auto s = testing::random_filtered_session(g, testing::draw(g, 0, 200), testing::draw(g, 1, 40));
    const auto before = extract_features(s, Category::Telnet);
    auto extra = s.packets.empty() ? PacketRecord{} : s.packets.back();
    extra.dst_ip = 0xFE000000;  // never produced by the generator
    s.packets.push_back(extra);
    const auto after = extract_features(s, Category::Telnet);
    EXPECT_EQ(after.f1_unique_dsts, before.f1_unique_dsts + 1);
    EXPECT_EQ(after.f3_min_pkts_per_dst, 1u);
  }
}

}  // namespace
}  // namespace edima
