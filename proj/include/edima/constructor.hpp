#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "edima/ml.hpp"

namespace edima {

struct SplitSpec {
  double train_fraction = 0.7;
  std::uint64_t seed = 0;
  bool stratified = true;
};

struct SplitResult {
  Dataset train;
  Dataset test;
};

/// Seeded partition; both sides keep the input row order. Stratified splits
/// round each class share independently and leave at least one row of each
/// class on both sides. Throws Error{TooFewRows, InvalidHyperparams}.
SplitResult split(const Dataset& data, const SplitSpec& spec);

struct BuildResult {
  TrainedModel model;
  Metrics metrics;
};

/// Scores a trained model on labeled rows.
Metrics evaluate_model(const TrainedModel& model, const Dataset& test);

/// Trains on `train` only and scores on `test`.
BuildResult fit_and_evaluate(Algorithm algorithm, const Dataset& train, const Dataset& test,
                             const Hyperparams& hp, std::uint64_t seed);

/// split() followed by fit_and_evaluate().
BuildResult build(Algorithm algorithm, const Dataset& data, const SplitSpec& spec,
                  const Hyperparams& hp, std::uint64_t seed);

enum class Decision { Promoted, Kept };
std::string_view to_string(Decision d) noexcept;

struct HistoryEntry {
  std::string digest;
  Metrics metrics;
  Decision decision = Decision::Kept;
  std::string timestamp;

  friend bool operator==(const HistoryEntry&, const HistoryEntry&) = default;
};

/// Active classifier for one category plus every promotion decision made.
struct ModelRegistryEntry {
  Category category = Category::Telnet;
  std::optional<TrainedModel> active_model;
  Metrics active_metrics;
  std::vector<HistoryEntry> history;
  // Sample ids held out for scoring; retraining keeps them out of training
  // so every candidate is compared on the same rows.
  std::vector<std::string> holdout_ids;
};

inline constexpr double kDefaultMinGain = 0.01;

/// PROMOTED iff there is no active model or the candidate's accuracy is at
/// least the active accuracy plus `min_gain`. Appends to the history.
/// Throws Error{InvalidHyperparams} for a negative min_gain and
/// Error{CategoryMismatch} for a candidate of another category.
Decision compare_and_promote(ModelRegistryEntry& registry, const TrainedModel& candidate,
                             const Metrics& candidate_metrics,
                             double min_gain = kDefaultMinGain,
                             const std::string& timestamp = {});

/// <root>/<category>/{active.model, registry.json, history.jsonl}
std::filesystem::path registry_dir(const std::filesystem::path& root, Category category);
void save_registry(const std::filesystem::path& root, const ModelRegistryEntry& entry);
/// Empty optional when nothing has been saved for the category yet.
std::optional<ModelRegistryEntry> load_registry(const std::filesystem::path& root,
                                                Category category);

}  // namespace edima
