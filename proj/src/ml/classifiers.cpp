#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "edima/error.hpp"
#include "edima/ml.hpp"
#include "forest_builder.hpp"

namespace edima {

std::string_view to_string(Algorithm a) noexcept {
  switch (a) {
    case Algorithm::Gnb: return "gnb";
    case Algorithm::Knn: return "knn";
    case Algorithm::Rf: return "rf";
  }
  return "?";
}

std::optional<Algorithm> parse_algorithm(std::string_view s) {
  for (auto a : {Algorithm::Gnb, Algorithm::Knn, Algorithm::Rf}) {
    std::string lower(s);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == to_string(a)) return a;
  }
  return std::nullopt;
}

FeatureRow Scaler::apply(const FeatureRow& raw) const {
  FeatureRow out{};
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    const double div = stdev[f] == 0.0 ? 1.0 : stdev[f];
    out[f] = (raw[f] - mean[f]) / div;
  }
  return out;
}

Scaler fit_scaler(std::span<const FeatureVector> train) {
  if (train.empty()) throw Error(ErrorCode::EmptyDataset, "cannot fit a scaler on zero rows");
  Scaler s;
  const double n = static_cast<double>(train.size());
  for (const auto& fv : train) {
    const auto v = fv.values();
    for (std::size_t f = 0; f < kNumFeatures; ++f) s.mean[f] += v[f];
  }
  for (auto& m : s.mean) m /= n;
  FeatureRow ss{};
  for (const auto& fv : train) {
    const auto v = fv.values();
    for (std::size_t f = 0; f < kNumFeatures; ++f) ss[f] += (v[f] - s.mean[f]) * (v[f] - s.mean[f]);
  }
  for (std::size_t f = 0; f < kNumFeatures; ++f) s.stdev[f] = std::sqrt(ss[f] / n);
  return s;
}

namespace {

void validate_rows(std::span<const FeatureVector> rows) {
  if (rows.empty()) throw Error(ErrorCode::EmptyDataset, "training set is empty");
  std::array<std::size_t, 2> per_class{};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].label)
      throw Error(ErrorCode::EmptyDataset, "row " + std::to_string(i) + " has no label");
    if (rows[i].category != rows.front().category)
      throw Error(ErrorCode::CategoryMismatch, "training rows mix malware categories");
    ++per_class[label_index(*rows[i].label)];
  }
  if (per_class[0] == 0 || per_class[1] == 0)
    throw Error(ErrorCode::SingleClassDataset, "training set needs both benign and malicious rows");
}

GaussianNbParams train_gnb(std::span<const FeatureVector> rows) {
  GaussianNbParams p;
  std::array<double, 2> count{};
  FeatureRow overall_mean{};
  for (const auto& fv : rows) {
    const auto c = label_index(*fv.label);
    const auto v = fv.values();
    count[c] += 1.0;
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      p.means[c][f] += v[f];
      overall_mean[f] += v[f];
    }
  }
  const double n = static_cast<double>(rows.size());
  for (std::size_t c = 0; c < 2; ++c) {
    p.priors[c] = count[c] / n;
    for (auto& m : p.means[c]) m /= count[c];
  }
  for (auto& m : overall_mean) m /= n;

  FeatureRow overall_var{};
  for (const auto& fv : rows) {
    const auto c = label_index(*fv.label);
    const auto v = fv.values();
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      p.variances[c][f] += (v[f] - p.means[c][f]) * (v[f] - p.means[c][f]);
      overall_var[f] += (v[f] - overall_mean[f]) * (v[f] - overall_mean[f]);
    }
  }
  double max_var = 0.0;
  for (auto& v : overall_var) max_var = std::max(max_var, v / n);
  // Every feature constant: fall back to an absolute floor.
  const double floor = max_var > 0.0 ? 1e-9 * max_var : 1e-9;
  for (std::size_t c = 0; c < 2; ++c) {
    for (auto& v : p.variances[c]) v = std::max(v / count[c], floor);
  }
  return p;
}

KnnParams train_knn(std::span<const FeatureVector> rows, const Scaler& scaler, int k) {
  KnnParams p;
  p.k = k;
  p.points.reserve(rows.size());
  p.labels.reserve(rows.size());
  for (const auto& fv : rows) {
    p.points.push_back(scaler.apply(fv));
    p.labels.push_back(*fv.label);
  }
  return p;
}

std::array<double, 2> gnb_log_joint(const GaussianNbParams& p, const FeatureRow& x) {
  std::array<double, 2> lj{};
  for (std::size_t c = 0; c < 2; ++c) {
    double acc = std::log(p.priors[c]);
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      const double var = p.variances[c][f];
      const double d = x[f] - p.means[c][f];
      acc += -0.5 * std::log(2.0 * std::numbers::pi * var) - d * d / (2.0 * var);
    }
    lj[c] = acc;
  }
  return lj;
}

Prediction predict_knn(const KnnParams& p, const FeatureRow& query) {
  std::vector<std::pair<double, std::size_t>> dist(p.points.size());
  for (std::size_t i = 0; i < p.points.size(); ++i) {
    double d2 = 0.0;
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      const double d = p.points[i][f] - query[f];
      d2 += d * d;
    }
    dist[i] = {d2, i};
  }
  const auto k = static_cast<std::size_t>(p.k);
  // Equal distances resolve by training-row order.
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  std::size_t malicious = 0;
  for (std::size_t i = 0; i < k; ++i) {
    if (p.labels[dist[i].second] == Label::Malicious) ++malicious;
  }
  Prediction out;
  out.label = 2 * malicious >= k ? Label::Malicious : Label::Benign;
  out.score = static_cast<double>(malicious) / static_cast<double>(k);
  return out;
}

Prediction predict_forest(const ForestParams& p, const FeatureRow& raw) {
  std::size_t malicious = 0;
  for (const auto& tree : p.trees) {
    if (tree.predict(raw) == Label::Malicious) ++malicious;
  }
  Prediction out;
  out.label = 2 * malicious >= p.trees.size() ? Label::Malicious : Label::Benign;
  out.score = static_cast<double>(malicious) / static_cast<double>(p.trees.size());
  return out;
}

}  // namespace

std::array<double, 2> gnb_posteriors(const GaussianNbParams& params, const FeatureRow& raw) {
  const auto lj = gnb_log_joint(params, raw);
  const double top = std::max(lj[0], lj[1]);
  const double e0 = std::exp(lj[0] - top);
  const double e1 = std::exp(lj[1] - top);
  return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

TrainedModel train(Algorithm algorithm, std::span<const FeatureVector> rows,
                   const Hyperparams& hp, std::uint64_t seed) {
  validate_rows(rows);

  TrainedModel model;
  model.algorithm = algorithm;
  model.category = rows.front().category;
  model.scaler = fit_scaler(rows);
  model.meta.seed = seed;
  model.meta.row_count = rows.size();

  switch (algorithm) {
    case Algorithm::Gnb:
      model.params = train_gnb(rows);
      break;
    case Algorithm::Knn:
      if (hp.k < 1 || hp.k % 2 == 0 || static_cast<std::size_t>(hp.k) > rows.size())
        throw Error(ErrorCode::InvalidHyperparams,
                    "k must be odd and between 1 and the training row count (" +
                        std::to_string(rows.size()) + "), got " + std::to_string(hp.k));
      model.params = train_knn(rows, model.scaler, hp.k);
      break;
    case Algorithm::Rf: {
      if (hp.trees < 1) throw Error(ErrorCode::InvalidHyperparams, "forest needs at least one tree");
      if (hp.max_features < 1 || hp.max_features > static_cast<int>(kNumFeatures))
        throw Error(ErrorCode::InvalidHyperparams, "max_features must be in [1, 4]");
      std::vector<FeatureRow> x;
      std::vector<Label> y;
      x.reserve(rows.size());
      y.reserve(rows.size());
      for (const auto& fv : rows) {
        x.push_back(fv.values());
        y.push_back(*fv.label);
      }
      model.params = detail::build_forest(x, y, hp.trees, hp.max_features, seed);
      break;
    }
  }
  return model;
}

Prediction predict(const TrainedModel& model, const FeatureVector& fv) {
  if (fv.category != model.category)
    throw Error(ErrorCode::CategoryMismatch,
                "model is for " + std::string(to_string(model.category)) +
                    ", feature vector is " + std::string(to_string(fv.category)));
  const auto raw = fv.values();
  switch (model.algorithm) {
    case Algorithm::Gnb: {
      const auto& p = std::get<GaussianNbParams>(model.params);
      const auto lj = gnb_log_joint(p, raw);
      Prediction out;
      out.label = lj[1] >= lj[0] ? Label::Malicious : Label::Benign;
      out.score = gnb_posteriors(p, raw)[1];
      return out;
    }
    case Algorithm::Knn:
      return predict_knn(std::get<KnnParams>(model.params), model.scaler.apply(raw));
    case Algorithm::Rf:
      return predict_forest(std::get<ForestParams>(model.params), raw);
  }
  return {};
}

}  // namespace edima
