#include "edima/constructor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "edima/error.hpp"
#include "edima/rng.hpp"

namespace edima {

using nlohmann::json;

namespace {

std::size_t train_count(double fraction, std::size_t n) {
  const auto want = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  return std::clamp<std::size_t>(want, 1, n - 1);
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[static_cast<std::size_t>(rng.below(i))]);
}

}  // namespace

SplitResult split(const Dataset& data, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
    throw Error(ErrorCode::InvalidHyperparams, "train fraction must lie strictly between 0 and 1");

  Rng rng(spec.seed);
  std::vector<bool> in_train(data.size(), false);
  auto pick = [&](std::vector<std::size_t> idx) {
    shuffle(idx, rng);
    const auto n_train = train_count(spec.train_fraction, idx.size());
    for (std::size_t i = 0; i < n_train; ++i) in_train[idx[i]] = true;
  };

  if (spec.stratified) {
    std::array<std::vector<std::size_t>, 2> by_class;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!data[i].label)
        throw Error(ErrorCode::TooFewRows, "stratified split needs labeled rows");
      by_class[label_index(*data[i].label)].push_back(i);
    }
    for (const auto& cls : by_class) {
      if (cls.size() < 2)
        throw Error(ErrorCode::TooFewRows, "stratified split needs at least 2 rows per class");
    }
    pick(by_class[0]);
    pick(by_class[1]);
  } else {
    if (data.size() < 2) throw Error(ErrorCode::TooFewRows, "split needs at least 2 rows");
    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), 0);
    pick(std::move(all));
  }

  SplitResult out;
  for (std::size_t i = 0; i < data.size(); ++i) (in_train[i] ? out.train : out.test).push_back(data[i]);
  return out;
}

Metrics evaluate_model(const TrainedModel& model, const Dataset& test) {
  std::vector<Label> predicted, truth;
  predicted.reserve(test.size());
  truth.reserve(test.size());
  for (const auto& fv : test) {
    if (!fv.label) throw Error(ErrorCode::EmptyInput, "evaluation rows must be labeled");
    predicted.push_back(predict(model, fv).label);
    truth.push_back(*fv.label);
  }
  return compute_metrics(predicted, truth);
}

BuildResult fit_and_evaluate(Algorithm algorithm, const Dataset& train_rows, const Dataset& test,
                             const Hyperparams& hp, std::uint64_t seed) {
  BuildResult out{train(algorithm, train_rows, hp, seed), {}};
  out.metrics = evaluate_model(out.model, test);
  return out;
}

BuildResult build(Algorithm algorithm, const Dataset& data, const SplitSpec& spec,
                  const Hyperparams& hp, std::uint64_t seed) {
  auto parts = split(data, spec);
  return fit_and_evaluate(algorithm, parts.train, parts.test, hp, seed);
}

std::string_view to_string(Decision d) noexcept {
  return d == Decision::Promoted ? "promoted" : "kept";
}

Decision compare_and_promote(ModelRegistryEntry& registry, const TrainedModel& candidate,
                             const Metrics& candidate_metrics, double min_gain,
                             const std::string& timestamp) {
  if (!(min_gain >= 0.0)) throw Error(ErrorCode::InvalidHyperparams, "min_gain must be >= 0");
  if (candidate.category != registry.category)
    throw Error(ErrorCode::CategoryMismatch, "candidate model targets another category");

  // The 1e-12 slack keeps e.g. 0.91 vs 0.90 + 0.01 from failing on rounding.
  const bool promote =
      !registry.active_model ||
      candidate_metrics.accuracy >= registry.active_metrics.accuracy + min_gain - 1e-12;
  const Decision decision = promote ? Decision::Promoted : Decision::Kept;
  if (promote) {
    registry.active_model = candidate;
    registry.active_metrics = candidate_metrics;
  }
  registry.history.push_back({model_digest(candidate), candidate_metrics, decision, timestamp});
  return decision;
}

std::filesystem::path registry_dir(const std::filesystem::path& root, Category category) {
  return root / std::string(to_string(category));
}

void save_registry(const std::filesystem::path& root, const ModelRegistryEntry& entry) {
  const auto dir = registry_dir(root, entry.category);
  std::filesystem::create_directories(dir);
  if (entry.active_model) save_model(dir / "active.model", *entry.active_model);

  json doc;
  doc["category"] = to_string(entry.category);
  doc["active_digest"] =
      entry.active_model ? json(model_digest(*entry.active_model)) : json(nullptr);
  doc["active_metrics"] = to_json(entry.active_metrics);
  doc["holdout_ids"] = entry.holdout_ids;

  auto write_atomic = [](const std::filesystem::path& path, const std::string& body) {
    const auto tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      if (!out) throw Error(ErrorCode::Io, "cannot create " + tmp);
      out << body;
      if (!out) throw Error(ErrorCode::Io, "short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
  };
  write_atomic(dir / "registry.json", doc.dump(2) + "\n");

  std::string history;
  for (const auto& h : entry.history) {
    history += json{{"digest", h.digest},
                    {"metrics", to_json(h.metrics)},
                    {"decision", to_string(h.decision)},
                    {"timestamp", h.timestamp}}
                   .dump();
    history += '\n';
  }
  write_atomic(dir / "history.jsonl", history);
}

std::optional<ModelRegistryEntry> load_registry(const std::filesystem::path& root,
                                                Category category) {
  const auto dir = registry_dir(root, category);
  if (!std::filesystem::exists(dir / "registry.json")) return std::nullopt;

  ModelRegistryEntry entry;
  entry.category = category;
  try {
    std::ifstream in(dir / "registry.json");
    json doc = json::parse(in);
    entry.active_metrics = metrics_from_json(doc.at("active_metrics"));
    entry.holdout_ids = doc.at("holdout_ids").get<std::vector<std::string>>();
    if (!doc.at("active_digest").is_null()) {
      entry.active_model = load_model(dir / "active.model");
      if (model_digest(*entry.active_model) != doc.at("active_digest").get<std::string>())
        throw Error(ErrorCode::MalformedModel, "active.model does not match registry digest");
    }

    std::ifstream hist(dir / "history.jsonl");
    std::string line;
    while (std::getline(hist, line)) {
      if (line.empty()) continue;
      json h = json::parse(line);
      const auto decision = h.at("decision").get<std::string>();
      entry.history.push_back({h.at("digest").get<std::string>(),
                               metrics_from_json(h.at("metrics")),
                               decision == "promoted" ? Decision::Promoted : Decision::Kept,
                               h.at("timestamp").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRow, "registry for " + std::string(to_string(category)) +
                                             " is unreadable: " + e.what());
  }
  return entry;
}

}  // namespace edima
