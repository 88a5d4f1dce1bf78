#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "edima/common.hpp"

namespace edima {

/// Classification outcome for one gateway session.
struct Verdict {
  std::string gateway_id;
  std::int64_t window_start_micros = 0;
  Category category = Category::Telnet;
  Label label = Label::Benign;
  double score = 0.0;

  friend bool operator==(const Verdict&, const Verdict&) = default;
};

enum class ActionKind { BlockGatewayTraffic, NotifyAdmin, LogOnly };

std::string_view to_string(ActionKind a) noexcept;
std::optional<ActionKind> parse_action(std::string_view s);

struct PolicyRule {
  std::optional<Category> category;  // any category when absent
  Label label = Label::Malicious;
  double min_score = 0.0;
  ActionKind action = ActionKind::LogOnly;
  std::map<std::string, std::string> params;

  bool matches(const Verdict& v) const {
    return (!category || *category == v.category) && label == v.label && v.score >= min_score;
  }
};

struct PolicyAction {
  ActionKind action = ActionKind::LogOnly;
  std::string gateway;
  Verdict verdict;
  std::optional<std::size_t> rule_index;  // empty for the implicit log-only fallback
  std::int64_t issued_at_us = 0;
  std::map<std::string, std::string> params;

  friend bool operator==(const PolicyAction&, const PolicyAction&) = default;
};

/// First matching rule wins; with no match the verdict is logged.
PolicyAction evaluate(std::span<const PolicyRule> rules, const Verdict& verdict,
                      std::int64_t issued_at_us);

nlohmann::json to_json(const Verdict& v);
Verdict verdict_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PolicyRule& r);
nlohmann::json to_json(const PolicyAction& a);

/// Parses a JSON array of {category?, label, min_score?, action, params?}.
/// Throws Error{MalformedRules}.
std::vector<PolicyRule> rules_from_json(const nlohmann::json& j);
std::vector<PolicyRule> load_rules(const std::filesystem::path& path);

}  // namespace edima
