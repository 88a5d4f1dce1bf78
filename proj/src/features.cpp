#include "edima/features.hpp"

#include <algorithm>
#include <limits>
#include <unordered_map>

#include "edima/error.hpp"

namespace edima {

FeatureVector extract_features(const TrafficSession& filtered, Category category) {
  FeatureVector fv;
  fv.category = category;
  fv.gateway = filtered.gateway_id;
  fv.window_start_us = filtered.window_start_micros;
  if (filtered.packets.empty()) return fv;

  std::unordered_map<Ipv4, std::uint64_t> per_dst;
  per_dst.reserve(filtered.packets.size());
  for (const auto& p : filtered.packets) ++per_dst[p.dst_ip];

  std::uint64_t max_count = 0;
  std::uint64_t min_count = std::numeric_limits<std::uint64_t>::max();
  for (const auto& [dst, count] : per_dst) {
    max_count = std::max(max_count, count);
    min_count = std::min(min_count, count);
  }
  fv.f1_unique_dsts = per_dst.size();
  fv.f2_max_pkts_per_dst = max_count;
  fv.f3_min_pkts_per_dst = min_count;
  fv.f4_mean_pkts_per_dst =
      static_cast<double>(filtered.packets.size()) / static_cast<double>(per_dst.size());
  return fv;
}

bool features_consistent(const FeatureVector& fv) {
  if (fv.f1_unique_dsts == 0)
    return fv.f2_max_pkts_per_dst == 0 && fv.f3_min_pkts_per_dst == 0 &&
           fv.f4_mean_pkts_per_dst == 0.0;
  return fv.f3_min_pkts_per_dst >= 1 &&
         static_cast<double>(fv.f2_max_pkts_per_dst) >= fv.f4_mean_pkts_per_dst &&
         fv.f4_mean_pkts_per_dst >= static_cast<double>(fv.f3_min_pkts_per_dst);
}

nlohmann::json to_json(const FeatureVector& fv) {
  nlohmann::json j;
  j["gateway"] = fv.gateway;
  j["window_start_us"] = fv.window_start_us;
  j["category"] = to_string(fv.category);
  j["f1"] = fv.f1_unique_dsts;
  j["f2"] = fv.f2_max_pkts_per_dst;
  j["f3"] = fv.f3_min_pkts_per_dst;
  j["f4"] = fv.f4_mean_pkts_per_dst;
  j["label"] = fv.label ? nlohmann::json(to_string(*fv.label)) : nlohmann::json(nullptr);
  return j;
}

namespace {

const nlohmann::json& require(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end())
    throw Error(ErrorCode::MalformedRow, std::string("missing key '") + key + "'");
  return *it;
}

std::uint64_t require_count(const nlohmann::json& j, const char* key) {
  const auto& v = require(j, key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    throw Error(ErrorCode::MalformedRow,
                std::string("'") + key + "' must be a non-negative integer");
  return v.get<std::uint64_t>();
}

}  // namespace

FeatureVector feature_vector_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::MalformedRow, "row is not a JSON object");
  FeatureVector fv;

  const auto& gw = require(j, "gateway");
  if (!gw.is_string()) throw Error(ErrorCode::MalformedRow, "'gateway' must be a string");
  fv.gateway = gw.get<std::string>();

  const auto& ws = require(j, "window_start_us");
  if (!ws.is_number_integer())
    throw Error(ErrorCode::MalformedRow, "'window_start_us' must be an integer");
  fv.window_start_us = ws.get<std::int64_t>();

  const auto& cat = require(j, "category");
  auto category = cat.is_string() ? parse_category(cat.get<std::string>()) : std::nullopt;
  if (!category) throw Error(ErrorCode::MalformedRow, "unknown category");
  fv.category = *category;

  fv.f1_unique_dsts = require_count(j, "f1");
  fv.f2_max_pkts_per_dst = require_count(j, "f2");
  fv.f3_min_pkts_per_dst = require_count(j, "f3");
  const auto& f4 = require(j, "f4");
  if (!f4.is_number()) throw Error(ErrorCode::MalformedRow, "'f4' must be a number");
  fv.f4_mean_pkts_per_dst = f4.get<double>();

  const auto& label = require(j, "label");
  if (!label.is_null()) {
    auto l = label.is_string() ? parse_label(label.get<std::string>()) : std::nullopt;
    if (!l) throw Error(ErrorCode::MalformedRow, "label must be benign, malicious or null");
    fv.label = *l;
  }

  if (!features_consistent(fv))
    throw Error(ErrorCode::MalformedRow, "feature values violate f1..f4 invariants");
  return fv;
}

}  // namespace edima
