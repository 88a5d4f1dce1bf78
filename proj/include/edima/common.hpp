#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace edima {

/// The three malware families, grouped by the service their exploits target.
enum class Category { Telnet, HttpPost, HttpGet };

inline constexpr std::array<Category, 3> kAllCategories = {
    Category::Telnet, Category::HttpPost, Category::HttpGet};

enum class Label { Benign, Malicious };

/// "telnet", "http-post", "http-get".
std::string_view to_string(Category c) noexcept;
/// "benign", "malicious".
std::string_view to_string(Label l) noexcept;

/// Case-insensitive; accepts '_' in place of '-'. Empty optional on no match.
std::optional<Category> parse_category(std::string_view s);
std::optional<Label> parse_label(std::string_view s);

using Ipv4 = std::uint32_t;

/// Dotted quad, host-order input.
std::string ipv4_to_string(Ipv4 addr);
std::optional<Ipv4> parse_ipv4(std::string_view s);

/// ISO-8601 UTC with second resolution, e.g. "2026-10-16T08:15:00Z".
std::string iso8601_utc(std::int64_t unix_seconds);
std::string iso8601_now();

}  // namespace edima
