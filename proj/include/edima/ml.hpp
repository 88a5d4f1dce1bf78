#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "edima/common.hpp"
#include "edima/features.hpp"

namespace edima {

using FeatureRow = std::array<double, kNumFeatures>;

/// Training rows: labeled feature vectors of a single category.
using Dataset = std::vector<FeatureVector>;

enum class Algorithm { Gnb, Knn, Rf };

std::string_view to_string(Algorithm a) noexcept;
std::optional<Algorithm> parse_algorithm(std::string_view s);

inline constexpr std::size_t label_index(Label l) {
  return l == Label::Malicious ? 1 : 0;
}

// ---------------------------------------------------------------------------
// Standardization

struct Scaler {
  FeatureRow mean{};
  FeatureRow stdev{};  // population; 0 for constant features

  /// (x - mean) / stdev, with a zero stdev treated as 1.
  FeatureRow apply(const FeatureRow& raw) const;
  FeatureRow apply(const FeatureVector& fv) const { return apply(fv.values()); }

  friend bool operator==(const Scaler&, const Scaler&) = default;
};

/// Throws Error{EmptyDataset}.
Scaler fit_scaler(std::span<const FeatureVector> train);

// ---------------------------------------------------------------------------
// Model parameters

struct GaussianNbParams {
  std::array<double, 2> priors{};                // indexed by label_index
  std::array<FeatureRow, 2> means{};
  std::array<FeatureRow, 2> variances{};         // floored, always > 0

  friend bool operator==(const GaussianNbParams&, const GaussianNbParams&) = default;
};

struct KnnParams {
  int k = 5;
  std::vector<FeatureRow> points;  // standardized
  std::vector<Label> labels;

  friend bool operator==(const KnnParams&, const KnnParams&) = default;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // x[feature] <= threshold goes left
  int left = -1;
  int right = -1;
  std::array<std::uint32_t, 2> counts{};  // training samples per class

  bool is_leaf() const noexcept { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  Label predict(const FeatureRow& raw) const;
  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;
};

struct ForestParams {
  int max_features = 2;
  std::vector<DecisionTree> trees;

  friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

struct TrainMeta {
  std::uint64_t seed = 0;
  std::size_t row_count = 0;
  // Left empty by train() so that serialized models depend only on
  // (inputs, seed); callers that persist models stamp it.
  std::string trained_at;

  friend bool operator==(const TrainMeta&, const TrainMeta&) = default;
};

struct TrainedModel {
  Algorithm algorithm = Algorithm::Knn;
  Category category = Category::Telnet;
  Scaler scaler;
  std::variant<GaussianNbParams, KnnParams, ForestParams> params;
  TrainMeta meta;

  friend bool operator==(const TrainedModel&, const TrainedModel&) = default;
};

struct Hyperparams {
  int k = 5;             // knn, odd
  int trees = 100;       // rf
  int max_features = 2;  // rf, candidates per split (ceil(sqrt(4)))
};

// ---------------------------------------------------------------------------
// Training and prediction

/// Deterministic in (algorithm, rows, hyperparams, seed). Throws
/// Error{EmptyDataset, SingleClassDataset, InvalidHyperparams,
/// CategoryMismatch (mixed categories)}.
TrainedModel train(Algorithm algorithm, std::span<const FeatureVector> rows,
                   const Hyperparams& hp, std::uint64_t seed);

struct Prediction {
  Label label = Label::Benign;
  double score = 0.0;  // belief in MALICIOUS, [0, 1]
};

/// Throws Error{CategoryMismatch} if fv.category differs from the model's.
Prediction predict(const TrainedModel& model, const FeatureVector& fv);

/// Normalized class posteriors {benign, malicious} for raw features.
std::array<double, 2> gnb_posteriors(const GaussianNbParams& params, const FeatureRow& raw);

/// Bootstrap sample drawn for each tree of a forest trained with `seed` on
/// `n` rows. train() draws exactly these.
std::vector<std::vector<std::size_t>> forest_bootstrap_indices(std::size_t n, int trees,
                                                               std::uint64_t seed);

// ---------------------------------------------------------------------------
// Metrics (MALICIOUS is the positive class)

struct Metrics {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  double accuracy = 0.0;
  double precision = 0.0;  // 0 when tp + fp == 0
  double recall = 0.0;     // 0 when tp + fn == 0
  double f1 = 0.0;         // 0 when precision + recall == 0

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

Metrics metrics_from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn,
                            std::uint64_t tn);

/// Throws Error{LengthMismatch, EmptyInput}.
Metrics compute_metrics(std::span<const Label> predicted, std::span<const Label> truth);

/// Harmonic mean of precision and recall; 0 when both are 0.
double f1_score(double precision, double recall);

nlohmann::json to_json(const Metrics& m);
Metrics metrics_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Serialization ("edima-model/1")

inline constexpr std::string_view kModelVersion = "edima-model/1";

nlohmann::json to_json(const TrainedModel& model);
/// Validates every model invariant; throws Error{MalformedModel}.
TrainedModel model_from_json(const nlohmann::json& j);

std::string serialize_model(const TrainedModel& model);
TrainedModel deserialize_model(std::string_view text);

void save_model(const std::filesystem::path& path, const TrainedModel& model);
TrainedModel load_model(const std::filesystem::path& path);

/// Hex FNV-1a 64 of the serialized model with trained_at cleared.
std::string model_digest(const TrainedModel& model);

}  // namespace edima
