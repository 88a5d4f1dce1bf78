#include <gtest/gtest.h>

#include <set>

#include "edima/common.hpp"
#include "edima/error.hpp"
#include "edima/rng.hpp"

namespace edima {
namespace {

TEST(Common, CategoryNames) {
  for (auto c : kAllCategories) EXPECT_EQ(parse_category(to_string(c)), c);
  EXPECT_EQ(parse_category("HTTP_POST"), Category::HttpPost);
  EXPECT_FALSE(parse_category("ssh"));
  EXPECT_EQ(parse_label("Malicious"), Label::Malicious);
  EXPECT_FALSE(parse_label("unknown"));
}

TEST(Common, Ipv4Text) {
  EXPECT_EQ(ipv4_to_string(0xC0A80164), "192.168.1.100");
  EXPECT_EQ(parse_ipv4("10.0.0.1"), 0x0A000001u);
  for (const char* bad : {"", "1.2.3", "1.2.3.256", "a.b.c.d", "1.2.3.4.5", "1..2.3"})
    EXPECT_FALSE(parse_ipv4(bad)) << bad;
}

TEST(Common, Iso8601) {
  EXPECT_EQ(iso8601_utc(0), "1970-01-01T00:00:00Z");
  EXPECT_EQ(iso8601_utc(1'700'000'000), "2023-11-14T22:13:20Z");
  EXPECT_EQ(iso8601_now().size(), 20u);
}

TEST(Common, ErrorCarriesCode) {
  const RowError e(ErrorCode::MalformedRow, 7, "bad");
  EXPECT_EQ(e.code(), ErrorCode::MalformedRow);
  EXPECT_EQ(e.line(), 7u);
  EXPECT_NE(std::string(e.what()).find("MalformedRow"), std::string::npos);
}

TEST(Rng, BelowStaysInRangeAndCoversIt) {
  Rng r(1);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto x = r.below(7);
    ASSERT_LT(x, 7u);
    seen.insert(x);
  }
  EXPECT_EQ(seen.size(), 7u);
}

TEST(Rng, DerivedSeedsDiffer) {
  std::set<std::uint64_t> seeds;
  for (std::uint64_t m = 0; m < 10; ++m)
    for (std::uint64_t i = 0; i < 100; ++i) seeds.insert(derive_seed(m, i));
  EXPECT_EQ(seeds.size(), 1000u);
}

TEST(Rng, ExponentialMean) {
  Rng r(2);
  double sum = 0;
  for (int i = 0; i < 100000; ++i) sum += r.exponential(4.0);
  EXPECT_NEAR(sum / 100000, 0.25, 0.005);
}

}  // namespace
}  // namespace edima
