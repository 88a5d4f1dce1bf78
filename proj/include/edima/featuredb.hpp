#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "edima/features.hpp"

namespace edima {

/// One labeled feature vector in the store.
struct SampleRecord {
  std::string id;
  FeatureVector fv;  // label always set
  std::string source;
  std::string added_at;  // ISO-8601 UTC

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

/// Feature row keys plus id, source, added_at.
nlohmann::json to_json(const SampleRecord& rec);
/// Throws Error{MalformedRow}.
SampleRecord sample_from_json(const nlohmann::json& j);

/// Default id for a sample: "<gateway>@<window_start_us>/<category>".
std::string default_sample_id(const FeatureVector& fv);

// Labeled feature store backed by a JSON-lines file (or memory only).
//
// Mutations are all-or-nothing. A file-backed store takes an advisory lock on
// "<path>.lock", re-reads the file, applies the change and replaces the file
// by rename, so concurrent readers always see a complete snapshot.
class FeatureDb {
 public:
  FeatureDb() = default;

  /// Loads (or creates on first write) a file-backed store.
  static FeatureDb open(const std::filesystem::path& path);

  /// Inserts the whole batch or nothing. Throws Error{DuplicateId} naming
  /// the first colliding id, Error{MalformedRow} for unlabeled rows.
  std::size_t insert(const std::vector<SampleRecord>& records);

  /// Records matching every given filter, ordered by (added_at, id).
  std::vector<SampleRecord> query(std::optional<Category> category = std::nullopt,
                                  std::optional<Label> label = std::nullopt,
                                  std::optional<std::size_t> limit = std::nullopt) const;

  /// Writes every record as one JSON line, in query order.
  void export_to(const std::filesystem::path& path) const;
  /// Reads an exported file and inserts it as one batch. Throws
  /// RowError{MalformedRow} with the 1-based line, Error{DuplicateId}.
  std::size_t import_from(const std::filesystem::path& path);

  std::size_t size() const { return records_.size(); }
  bool contains(const std::string& id) const { return ids_.count(id) != 0; }
  const std::optional<std::filesystem::path>& path() const { return path_; }

 private:
  void reload();
  void persist() const;
  std::size_t insert_locked(const std::vector<SampleRecord>& records);

  std::optional<std::filesystem::path> path_;
  std::vector<SampleRecord> records_;
  std::unordered_set<std::string> ids_;
};

/// Parses JSON-lines sample rows; throws RowError{MalformedRow}.
std::vector<SampleRecord> read_sample_rows(const std::filesystem::path& path);

}  // namespace edima
