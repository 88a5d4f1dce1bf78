#include "edima/common.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <ctime>

#include "edima/error.hpp"

namespace edima {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedHeader: return "TruncatedHeader";
    case ErrorCode::UnsupportedLinkType: return "UnsupportedLinkType";
    case ErrorCode::UnsortedInput: return "UnsortedInput";
    case ErrorCode::InvalidRecord: return "InvalidRecord";
    case ErrorCode::InvalidProbability: return "InvalidProbability";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::SingleClassDataset: return "SingleClassDataset";
    case ErrorCode::InvalidHyperparams: return "InvalidHyperparams";
    case ErrorCode::CategoryMismatch: return "CategoryMismatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::MalformedModel: return "MalformedModel";
    case ErrorCode::MalformedRules: return "MalformedRules";
    case ErrorCode::TooFewRows: return "TooFewRows";
    case ErrorCode::InvalidProfile: return "InvalidProfile";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

std::string_view to_string(Category c) noexcept {
  switch (c) {
    case Category::Telnet: return "telnet";
    case Category::HttpPost: return "http-post";
    case Category::HttpGet: return "http-get";
  }
  return "?";
}

std::string_view to_string(Label l) noexcept {
  return l == Label::Malicious ? "malicious" : "benign";
}

namespace {

std::string normalize(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char ch) {
    return ch == '_' ? '-' : static_cast<char>(std::tolower(ch));
  });
  return out;
}

}  // namespace

std::optional<Category> parse_category(std::string_view s) {
  const auto n = normalize(s);
  for (auto c : kAllCategories) {
    if (n == to_string(c)) return c;
  }
  return std::nullopt;
}

std::optional<Label> parse_label(std::string_view s) {
  const auto n = normalize(s);
  if (n == "benign") return Label::Benign;
  if (n == "malicious") return Label::Malicious;
  return std::nullopt;
}

std::string ipv4_to_string(Ipv4 addr) {
  return std::to_string(addr >> 24) + "." + std::to_string((addr >> 16) & 0xFF) +
         "." + std::to_string((addr >> 8) & 0xFF) + "." +
         std::to_string(addr & 0xFF);
}

std::optional<Ipv4> parse_ipv4(std::string_view s) {
  Ipv4 addr = 0;
  const char* p = s.data();
  const char* end = s.data() + s.size();
  for (int i = 0; i < 4; ++i) {
    unsigned octet = 0;
    auto [next, ec] = std::from_chars(p, end, octet);
    if (ec != std::errc{} || next == p || octet > 255) return std::nullopt;
    addr = (addr << 8) | octet;
    p = next;
    if (i < 3) {
      if (p == end || *p != '.') return std::nullopt;
      ++p;
    }
  }
  if (p != end) return std::nullopt;
  return addr;
}

std::string iso8601_utc(std::int64_t unix_seconds) {
  std::time_t t = static_cast<std::time_t>(unix_seconds);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string iso8601_now() {
  using namespace std::chrono;
  return iso8601_utc(
      duration_cast<seconds>(system_clock::now().time_since_epoch()).count());
}

}  // namespace edima
