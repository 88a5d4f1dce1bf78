#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace edima {

enum class ErrorCode {
  BadMagic,
  TruncatedHeader,
  UnsupportedLinkType,
  UnsortedInput,
  InvalidRecord,
  InvalidProbability,
  EmptyDataset,
  SingleClassDataset,
  InvalidHyperparams,
  CategoryMismatch,
  LengthMismatch,
  EmptyInput,
  DuplicateId,
  MalformedRow,
  MalformedModel,
  MalformedRules,
  TooFewRows,
  InvalidProfile,
  Io,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure raised by the library carries one of the codes above so
// callers (and the CLI exit path) can branch on the kind without parsing
// the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// MalformedRow / MalformedModel raised while reading a line-oriented file.
class RowError : public Error {
 public:
  RowError(ErrorCode code, std::size_t line, const std::string& what)
      : Error(code, "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  /// 1-based line number of the offending row.
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace edima
