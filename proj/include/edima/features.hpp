#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "edima/common.hpp"
#include "edima/sessionizer.hpp"

namespace edima {

inline constexpr std::size_t kNumFeatures = 4;

/// Per-session feature vector:
///   f1  number of distinct destination IPs
///   f2  max packets sent to one destination
///   f3  min packets sent to one destination
///   f4  mean packets per destination
/// An empty session maps to all zeros.
struct FeatureVector {
  std::uint64_t f1_unique_dsts = 0;
  std::uint64_t f2_max_pkts_per_dst = 0;
  std::uint64_t f3_min_pkts_per_dst = 0;
  double f4_mean_pkts_per_dst = 0.0;
  Category category = Category::Telnet;
  std::optional<Label> label;
  // session_ref
  std::string gateway;
  std::int64_t window_start_us = 0;

  std::array<double, kNumFeatures> values() const {
    return {static_cast<double>(f1_unique_dsts),
            static_cast<double>(f2_max_pkts_per_dst),
            static_cast<double>(f3_min_pkts_per_dst), f4_mean_pkts_per_dst};
  }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

/// Computes the four features over an already filtered session.
FeatureVector extract_features(const TrafficSession& filtered, Category category);

/// True when the zero/ordering/mean invariants between f1..f4 hold.
bool features_consistent(const FeatureVector& fv);

/// {gateway, window_start_us, category, f1, f2, f3, f4, label}
nlohmann::json to_json(const FeatureVector& fv);
/// Throws Error{MalformedRow} on missing keys, wrong types or broken invariants.
FeatureVector feature_vector_from_json(const nlohmann::json& j);

}  // namespace edima
