#include "edima/policy.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "edima/error.hpp"

namespace edima {

using nlohmann::json;

std::string_view to_string(ActionKind a) noexcept {
  switch (a) {
    case ActionKind::BlockGatewayTraffic: return "block_gateway_traffic";
    case ActionKind::NotifyAdmin: return "notify_admin";
    case ActionKind::LogOnly: return "log_only";
  }
  return "?";
}

std::optional<ActionKind> parse_action(std::string_view s) {
  std::string n(s);
  std::transform(n.begin(), n.end(), n.begin(), [](unsigned char c) {
    return c == '-' ? '_' : static_cast<char>(std::tolower(c));
  });
  for (auto a : {ActionKind::BlockGatewayTraffic, ActionKind::NotifyAdmin, ActionKind::LogOnly}) {
    if (n == to_string(a)) return a;
  }
  return std::nullopt;
}

PolicyAction evaluate(std::span<const PolicyRule> rules, const Verdict& verdict,
                      std::int64_t issued_at_us) {
  PolicyAction out;
  out.gateway = verdict.gateway_id;
  out.verdict = verdict;
  out.issued_at_us = issued_at_us;
  for (std::size_t i = 0; i < rules.size(); ++i) {
    if (rules[i].matches(verdict)) {
      out.action = rules[i].action;
      out.rule_index = i;
      out.params = rules[i].params;
      return out;
    }
  }
  out.action = ActionKind::LogOnly;
  return out;
}

json to_json(const Verdict& v) {
  return {{"gateway", v.gateway_id},
          {"window_start_us", v.window_start_micros},
          {"category", to_string(v.category)},
          {"label", to_string(v.label)},
          {"score", v.score}};
}

Verdict verdict_from_json(const json& j) {
  try {
    Verdict v;
    v.gateway_id = j.at("gateway").get<std::string>();
    v.window_start_micros = j.at("window_start_us").get<std::int64_t>();
    auto c = parse_category(j.at("category").get<std::string>());
    auto l = parse_label(j.at("label").get<std::string>());
    if (!c || !l) throw Error(ErrorCode::MalformedRow, "verdict has unknown category or label");
    v.category = *c;
    v.label = *l;
    v.score = j.at("score").get<double>();
    if (!(v.score >= 0.0 && v.score <= 1.0))
      throw Error(ErrorCode::MalformedRow, "verdict score outside [0, 1]");
    return v;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRow, std::string("bad verdict: ") + e.what());
  }
}

json to_json(const PolicyRule& r) {
  json j = {{"label", to_string(r.label)},
            {"min_score", r.min_score},
            {"action", to_string(r.action)}};
  if (r.category) j["category"] = to_string(*r.category);
  if (!r.params.empty()) j["params"] = r.params;
  return j;
}

json to_json(const PolicyAction& a) {
  return {{"action", to_string(a.action)},
          {"gateway", a.gateway},
          {"rule_index", a.rule_index ? json(*a.rule_index) : json(nullptr)},
          {"issued_at_us", a.issued_at_us},
          {"params", a.params},
          {"verdict", to_json(a.verdict)}};
}

std::vector<PolicyRule> rules_from_json(const json& j) {
  auto fail = [](std::size_t i, const std::string& why) {
    throw Error(ErrorCode::MalformedRules, "rule " + std::to_string(i) + ": " + why);
  };
  if (!j.is_array()) throw Error(ErrorCode::MalformedRules, "rules file must hold a JSON array");
  std::vector<PolicyRule> rules;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& r = j[i];
    if (!r.is_object()) fail(i, "not an object");
    PolicyRule rule;
    if (auto it = r.find("category"); it != r.end() && !it->is_null()) {
      auto c = it->is_string() ? parse_category(it->get<std::string>()) : std::nullopt;
      if (!c) fail(i, "unknown category");
      rule.category = c;
    }
    auto label = r.find("label");
    if (label == r.end() || !label->is_string()) fail(i, "missing label");
    auto l = parse_label(label->get<std::string>());
    if (!l) fail(i, "label must be benign or malicious");
    rule.label = *l;
    if (auto it = r.find("min_score"); it != r.end() && !it->is_null()) {
      if (!it->is_number()) fail(i, "min_score must be a number");
      rule.min_score = it->get<double>();
      if (!(rule.min_score >= 0.0 && rule.min_score <= 1.0)) fail(i, "min_score outside [0, 1]");
    }
    auto action = r.find("action");
    if (action == r.end() || !action->is_string()) fail(i, "missing action");
    auto a = parse_action(action->get<std::string>());
    if (!a) fail(i, "unknown action '" + action->get<std::string>() + "'");
    rule.action = *a;
    if (auto it = r.find("params"); it != r.end() && !it->is_null()) {
      if (!it->is_object()) fail(i, "params must be an object");
      for (const auto& [k, v] : it->items()) {
        if (!v.is_string()) fail(i, "param '" + k + "' must be a string");
        rule.params[k] = v.get<std::string>();
      }
    }
    rules.push_back(std::move(rule));
  }
  return rules;
}

std::vector<PolicyRule> load_rules(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open rules " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::MalformedRules, "rules file is not valid JSON");
  return rules_from_json(j);
}

}  // namespace edima
