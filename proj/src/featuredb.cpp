#include "edima/featuredb.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>

#include "edima/error.hpp"

namespace edima {

using nlohmann::json;

nlohmann::json to_json(const SampleRecord& rec) {
  json j = to_json(rec.fv);
  j["id"] = rec.id;
  j["source"] = rec.source;
  j["added_at"] = rec.added_at;
  return j;
}

SampleRecord sample_from_json(const nlohmann::json& j) {
  SampleRecord rec;
  rec.fv = feature_vector_from_json(j);
  if (!rec.fv.label) throw Error(ErrorCode::MalformedRow, "stored samples must be labeled");
  for (auto [key, field] : {std::pair{"id", &rec.id}, std::pair{"source", &rec.source},
                            std::pair{"added_at", &rec.added_at}}) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string())
      throw Error(ErrorCode::MalformedRow, std::string("'") + key + "' must be a string");
    *field = it->get<std::string>();
  }
  if (rec.id.empty()) throw Error(ErrorCode::MalformedRow, "'id' must not be empty");
  return rec;
}

std::string default_sample_id(const FeatureVector& fv) {
  return fv.gateway + "@" + std::to_string(fv.window_start_us) + "/" +
         std::string(to_string(fv.category));
}

std::vector<SampleRecord> read_sample_rows(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<SampleRecord> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw RowError(ErrorCode::MalformedRow, lineno, "invalid JSON");
    try {
      rows.push_back(sample_from_json(j));
    } catch (const Error& e) {
      throw RowError(ErrorCode::MalformedRow, lineno, e.what());
    }
  }
  return rows;
}

namespace {

class FileLock {
 public:
  explicit FileLock(const std::filesystem::path& target)
      : fd_(::open((target.string() + ".lock").c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644)) {
    if (fd_ < 0) throw Error(ErrorCode::Io, "cannot open lock for " + target.string());
    if (::flock(fd_, LOCK_EX) != 0) {
      ::close(fd_);
      throw Error(ErrorCode::Io, "cannot lock " + target.string());
    }
  }
  ~FileLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_;
};

bool record_order(const SampleRecord& a, const SampleRecord& b) {
  return std::tie(a.added_at, a.id) < std::tie(b.added_at, b.id);
}

void write_rows(const std::filesystem::path& path, const std::vector<SampleRecord>& rows) {
  std::vector<const SampleRecord*> sorted;
  sorted.reserve(rows.size());
  for (const auto& r : rows) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](auto* a, auto* b) { return record_order(*a, *b); });

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot create " + tmp);
    for (const auto* r : sorted) out << to_json(*r).dump() << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::Io, "short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

FeatureDb FeatureDb::open(const std::filesystem::path& path) {
  FeatureDb db;
  db.path_ = path;
  db.reload();
  return db;
}

void FeatureDb::reload() {
  records_.clear();
  ids_.clear();
  if (!path_ || !std::filesystem::exists(*path_)) return;
  auto rows = read_sample_rows(*path_);
  for (auto& r : rows) {
    if (!ids_.insert(r.id).second)
      throw Error(ErrorCode::DuplicateId, "store file repeats id '" + r.id + "'");
  }
  std::stable_sort(rows.begin(), rows.end(), record_order);
  records_ = std::move(rows);
}

void FeatureDb::persist() const { write_rows(*path_, records_); }

std::size_t FeatureDb::insert(const std::vector<SampleRecord>& records) {
  if (!path_) return insert_locked(records);
  FileLock lock(*path_);
  reload();
  return insert_locked(records);
}

std::size_t FeatureDb::insert_locked(const std::vector<SampleRecord>& records) {
  std::unordered_set<std::string> batch;
  for (const auto& r : records) {
    if (r.id.empty()) throw Error(ErrorCode::MalformedRow, "sample id must not be empty");
    if (!r.fv.label)
      throw Error(ErrorCode::MalformedRow, "sample '" + r.id + "' has no label");
    if (ids_.count(r.id) || !batch.insert(r.id).second)
      throw Error(ErrorCode::DuplicateId, "id '" + r.id + "' already present");
  }
  if (records.empty()) return 0;

  auto next = records_;
  next.insert(next.end(), records.begin(), records.end());
  std::stable_sort(next.begin(), next.end(), record_order);
  if (path_) write_rows(*path_, next);  // throws before any in-memory change

  records_ = std::move(next);
  ids_.insert(batch.begin(), batch.end());
  return records.size();
}

std::vector<SampleRecord> FeatureDb::query(std::optional<Category> category,
                                           std::optional<Label> label,
                                           std::optional<std::size_t> limit) const {
  std::vector<SampleRecord> out;
  for (const auto& r : records_) {
    if (limit && out.size() >= *limit) break;
    if (category && r.fv.category != *category) continue;
    if (label && r.fv.label != label) continue;
    out.push_back(r);
  }
  return out;
}

void FeatureDb::export_to(const std::filesystem::path& path) const {
  write_rows(path, records_);
}

std::size_t FeatureDb::import_from(const std::filesystem::path& path) {
  return insert(read_sample_rows(path));
}

}  // namespace edima
