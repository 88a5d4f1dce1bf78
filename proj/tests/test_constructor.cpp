#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "edima/constructor.hpp"
#include "edima/error.hpp"
#include "test_support.hpp"

namespace edima {
namespace {

namespace fs = std::filesystem;

FeatureVector labeled(std::uint64_t f1, Label label, double f4 = 1.0) {
  FeatureVector fv;
  fv.f1_unique_dsts = f1;
  fv.f2_max_pkts_per_dst = f1 ? 1 : 0;
  fv.f3_min_pkts_per_dst = f1 ? 1 : 0;
  fv.f4_mean_pkts_per_dst = f1 ? f4 : 0.0;
  fv.label = label;
  fv.gateway = "g" + std::to_string(f1);
  return fv;
}

Dataset balanced(std::size_t per_class) {
  Dataset d;
  for (std::size_t i = 0; i < per_class; ++i) {
    d.push_back(labeled(i + 1, Label::Benign));
    d.push_back(labeled(1000 + i, Label::Malicious));
  }
  return d;
}

std::size_t count(const Dataset& d, Label l) {
  return static_cast<std::size_t>(
      std::count_if(d.begin(), d.end(), [l](const auto& fv) { return fv.label == l; }));
}

TEST(Split, SeventyThirtyOnSixty) {
  const auto parts = split(balanced(30), {.train_fraction = 0.7, .seed = 4});
  EXPECT_EQ(parts.train.size(), 42u);
  EXPECT_EQ(parts.test.size(), 18u);
  EXPECT_EQ(count(parts.train, Label::Benign), 21u);
  EXPECT_EQ(count(parts.train, Label::Malicious), 21u);
  EXPECT_EQ(count(parts.test, Label::Benign), 9u);
  EXPECT_EQ(count(parts.test, Label::Malicious), 9u);
}

TEST(Split, HalfOfFour) {
  const auto parts = split(balanced(2), {.train_fraction = 0.5, .seed = 1});
  ASSERT_EQ(parts.train.size(), 2u);
  ASSERT_EQ(parts.test.size(), 2u);
  EXPECT_EQ(count(parts.train, Label::Benign), 1u);
  EXPECT_EQ(count(parts.test, Label::Benign), 1u);
}

TEST(Split, Deterministic) {
  const auto d = balanced(30);
  const auto a = split(d, {.seed = 9});
  const auto b = split(d, {.seed = 9});
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_NE(split(d, {.seed = 10}).train, a.train);
}

TEST(Split, Errors) {
  Dataset tiny{labeled(1, Label::Benign), labeled(2, Label::Malicious), labeled(3, Label::Malicious)};
  try {
    split(tiny, {});
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewRows);
  }
  for (double f : {0.0, 1.0, -0.2}) {
    try {
      split(balanced(5), {.train_fraction = f});
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidHyperparams);
    }
  }
}

TEST(SplitProperty, PartitionAndProportions) {
  std::mt19937_64 g(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto nb = testing::draw(g, 2, 40), nm = testing::draw(g, 2, 40);
    Dataset d;
    for (std::size_t i = 0; i < nb + nm; ++i)
      d.push_back(labeled(i + 1, i < nb ? Label::Benign : Label::Malicious));
    std::shuffle(d.begin(), d.end(), g);
    const double frac = 0.05 + 0.9 * static_cast<double>(g() % 1000) / 1000.0;
    const auto parts = split(d, {.train_fraction = frac, .seed = g()});
    EXPECT_EQ(parts.train.size() + parts.test.size(), d.size());
    // Disjoint cover: every f1 is unique, so compare the id multisets.
    std::vector<std::uint64_t> ids;
    for (const auto* side : {&parts.train, &parts.test})
      for (const auto& fv : *side) ids.push_back(fv.f1_unique_dsts);
    std::sort(ids.begin(), ids.end());
    for (std::size_t i = 0; i < ids.size(); ++i) EXPECT_EQ(ids[i], i + 1);
    for (auto [l, n] : {std::pair{Label::Benign, nb}, std::pair{Label::Malicious, nm}}) {
      const double ideal = frac * static_cast<double>(n);
      EXPECT_LE(std::abs(static_cast<double>(count(parts.train, l)) - ideal), 1.0);
      EXPECT_GE(count(parts.test, l), 1u);
    }
  }
}

TEST(Build, SeparableDataGivesPerfectKnn) {
  const auto data = testing::corpus_dataset(30, 30, Category::Telnet, {}, 17);
  const auto r = build(Algorithm::Knn, data, {.seed = 1}, {}, 1);
  EXPECT_EQ(r.metrics.accuracy, 1.0);
}

TEST(Build, IdenticalClassesAreCoinFlips) {
  double total = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    // Both classes drawn from the benign generator; only the labels differ.
    auto data = testing::corpus_dataset(60, 0, Category::Telnet, {}, seed);
    for (std::size_t i = 30; i < 60; ++i) data[i].label = Label::Malicious;
    total += build(Algorithm::Knn, data, {.seed = seed}, {}, seed).metrics.accuracy;
  }
  const double mean = total / 20;
  EXPECT_GE(mean, 0.3);
  EXPECT_LE(mean, 0.7);
}

TEST(Build, FullRecallOnDefaultCorpus) {
  for (auto cat : kAllCategories) {
    const auto data = testing::corpus_dataset(30, 30, cat, {}, 2024);
    for (auto algo : {Algorithm::Gnb, Algorithm::Knn, Algorithm::Rf}) {
      const auto r = build(algo, data, {.seed = 2024}, {}, 2024);
      EXPECT_EQ(r.metrics.recall, 1.0) << to_string(cat) << " " << to_string(algo);
      EXPECT_EQ(r.metrics.tp + r.metrics.fp + r.metrics.fn + r.metrics.tn, 18u);
    }
  }
}

TEST(Build, TestRowsNeverReachTheModel) {
  const auto data = testing::corpus_dataset(30, 30, Category::HttpPost, {}, 5);
  const auto parts = split(data, {.seed = 5});
  std::mt19937_64 g(5);
  for (auto algo : {Algorithm::Gnb, Algorithm::Knn, Algorithm::Rf}) {
    const auto base = fit_and_evaluate(algo, parts.train, parts.test, {}, 5);
    auto shuffled = parts.test;
    for (int rep = 0; rep < 3; ++rep) {
      std::shuffle(shuffled.begin(), shuffled.end(), g);
      const auto again = fit_and_evaluate(algo, parts.train, shuffled, {}, 5);
      EXPECT_EQ(model_digest(again.model), model_digest(base.model));
      EXPECT_EQ(again.metrics, base.metrics);
    }
  }
}

// ---------------------------------------------------------------------------
// Promotion

TrainedModel tiny_model(std::uint64_t seed = 0) {
  return train(Algorithm::Gnb, balanced(3), {}, seed);
}

Metrics with_accuracy(double acc) {
  Metrics m;
  m.accuracy = acc;
  return m;
}

ModelRegistryEntry registry_at(double acc) {
  ModelRegistryEntry r;
  r.active_model = tiny_model();
  r.active_metrics = with_accuracy(acc);
  return r;
}

TEST(Promotion, ClearGainPromotes) {
  auto reg = registry_at(0.90);
  EXPECT_EQ(compare_and_promote(reg, tiny_model(1), with_accuracy(0.95), 0.01), Decision::Promoted);
  EXPECT_EQ(reg.active_metrics.accuracy, 0.95);
  ASSERT_EQ(reg.history.size(), 1u);
  EXPECT_EQ(reg.history[0].decision, Decision::Promoted);
}

TEST(Promotion, WorseCandidateKept) {
  auto reg = registry_at(0.95);
  EXPECT_EQ(compare_and_promote(reg, tiny_model(1), with_accuracy(0.90), 0.01), Decision::Kept);
  EXPECT_EQ(reg.active_metrics.accuracy, 0.95);
  EXPECT_EQ(reg.history.back().decision, Decision::Kept);
}

TEST(Promotion, GainBelowThresholdKept) {
  auto reg = registry_at(0.90);
  EXPECT_EQ(compare_and_promote(reg, tiny_model(1), with_accuracy(0.905), 0.01), Decision::Kept);
  EXPECT_EQ(reg.active_metrics.accuracy, 0.90);
}

TEST(Promotion, ExactThresholdPromotes) {
  auto reg = registry_at(0.90);
  EXPECT_EQ(compare_and_promote(reg, tiny_model(1), with_accuracy(0.91), 0.01), Decision::Promoted);
}

TEST(Promotion, EmptyRegistryPromotes) {
  ModelRegistryEntry reg;
  EXPECT_EQ(compare_and_promote(reg, tiny_model(), with_accuracy(0.1)), Decision::Promoted);
  EXPECT_TRUE(reg.active_model);
}

TEST(Promotion, Errors) {
  auto reg = registry_at(0.9);
  EXPECT_THROW(compare_and_promote(reg, tiny_model(), with_accuracy(1), -0.1), Error);
  auto other = tiny_model();
  other.category = Category::HttpGet;
  EXPECT_THROW(compare_and_promote(reg, other, with_accuracy(1)), Error);
  EXPECT_TRUE(reg.history.empty());
}

TEST(PromotionProperty, ActiveAccuracyNeverDrops) {
  std::mt19937_64 g(3);
  for (int trial = 0; trial < 200; ++trial) {
    ModelRegistryEntry reg;
    const double min_gain = static_cast<double>(g() % 6) / 100.0;
    double last = -1;
    for (int step = 0; step < 30; ++step) {
      const double acc = static_cast<double>(g() % 101) / 100.0;
      const bool had = reg.active_model.has_value();
      const auto d = compare_and_promote(reg, tiny_model(), with_accuracy(acc), min_gain);
      if (had) EXPECT_GE(reg.active_metrics.accuracy, last);
      EXPECT_EQ(d == Decision::Promoted, !had || acc >= last + min_gain - 1e-12);
      last = reg.active_metrics.accuracy;
    }
    EXPECT_EQ(reg.history.size(), 30u);
  }
}

TEST(Registry, SaveLoadRoundTrip) {
  const auto root = fs::temp_directory_path() / ("edima_reg_" + std::to_string(std::random_device{}()));
  EXPECT_FALSE(load_registry(root, Category::Telnet));
  // Persisted metrics are rebuilt from their confusion counts.
  ModelRegistryEntry reg;
  reg.holdout_ids = {"a", "b"};
  compare_and_promote(reg, tiny_model(2), metrics_from_counts(9, 0, 0, 9), 0.01,
                      "2024-01-01T00:00:00Z");
  compare_and_promote(reg, tiny_model(3), metrics_from_counts(5, 4, 4, 5), 0.01,
                      "2024-01-02T00:00:00Z");
  save_registry(root, reg);
  EXPECT_TRUE(fs::exists(root / "telnet" / "active.model"));
  EXPECT_TRUE(fs::exists(root / "telnet" / "history.jsonl"));
  const auto back = load_registry(root, Category::Telnet);
  ASSERT_TRUE(back);
  EXPECT_EQ(back->active_model, reg.active_model);
  EXPECT_EQ(back->active_metrics, reg.active_metrics);
  EXPECT_EQ(back->history, reg.history);
  EXPECT_EQ(back->holdout_ids, reg.holdout_ids);
  EXPECT_FALSE(load_registry(root, Category::HttpGet));
  fs::remove_all(root);
}

}  // namespace
}  // namespace edima
