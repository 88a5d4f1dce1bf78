#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "edima/error.hpp"
#include "edima/ml.hpp"

namespace edima {

using nlohmann::json;

namespace {

[[noreturn]] void bad_model(const std::string& why) {
  throw Error(ErrorCode::MalformedModel, why);
}

FeatureRow row_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.size() != kNumFeatures)
    bad_model(std::string(what) + " must be an array of 4 numbers");
  FeatureRow r{};
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    if (!j[f].is_number()) bad_model(std::string(what) + " holds a non-number");
    r[f] = j[f].get<double>();
    if (!std::isfinite(r[f])) bad_model(std::string(what) + " holds a non-finite value");
  }
  return r;
}

json params_to_json(const GaussianNbParams& p) {
  return {{"priors", p.priors}, {"means", p.means}, {"variances", p.variances}};
}

json params_to_json(const KnnParams& p) {
  json labels = json::array();
  for (auto l : p.labels) labels.push_back(to_string(l));
  return {{"k", p.k}, {"points", p.points}, {"labels", labels}};
}

json params_to_json(const ForestParams& p) {
  json trees = json::array();
  for (const auto& t : p.trees) {
    json nodes = json::array();
    // [feature, threshold, left, right, benign_count, malicious_count]
    for (const auto& n : t.nodes)
      nodes.push_back({n.feature, n.threshold, n.left, n.right, n.counts[0], n.counts[1]});
    trees.push_back(std::move(nodes));
  }
  return {{"max_features", p.max_features}, {"trees", trees}};
}

GaussianNbParams gnb_from_json(const json& j) {
  GaussianNbParams p;
  const auto& priors = j.at("priors");
  if (!priors.is_array() || priors.size() != 2) bad_model("gnb priors must have 2 entries");
  double sum = 0.0;
  for (std::size_t c = 0; c < 2; ++c) {
    p.priors[c] = priors[c].get<double>();
    if (!(p.priors[c] > 0.0 && p.priors[c] < 1.0)) bad_model("gnb prior outside (0, 1)");
    sum += p.priors[c];
    p.means[c] = row_from_json(j.at("means").at(c), "gnb mean");
    p.variances[c] = row_from_json(j.at("variances").at(c), "gnb variance");
    for (double v : p.variances[c])
      if (!(v > 0.0)) bad_model("gnb variance must be positive");
  }
  if (std::abs(sum - 1.0) > 1e-9) bad_model("gnb priors do not sum to 1");
  return p;
}

KnnParams knn_from_json(const json& j) {
  KnnParams p;
  p.k = j.at("k").get<int>();
  const auto& points = j.at("points");
  const auto& labels = j.at("labels");
  if (!points.is_array() || !labels.is_array() || points.size() != labels.size())
    bad_model("knn points and labels must be arrays of equal length");
  for (std::size_t i = 0; i < points.size(); ++i) {
    p.points.push_back(row_from_json(points[i], "knn point"));
    auto l = parse_label(labels[i].get<std::string>());
    if (!l) bad_model("knn label must be benign or malicious");
    p.labels.push_back(*l);
  }
  if (p.k < 1 || p.k % 2 == 0 || static_cast<std::size_t>(p.k) > p.points.size())
    bad_model("knn k must be odd and between 1 and the stored row count");
  return p;
}

ForestParams forest_from_json(const json& j) {
  ForestParams p;
  p.max_features = j.at("max_features").get<int>();
  if (p.max_features < 1 || p.max_features > static_cast<int>(kNumFeatures))
    bad_model("rf max_features must be in [1, 4]");
  const auto& trees = j.at("trees");
  if (!trees.is_array() || trees.empty()) bad_model("rf needs at least one tree");
  for (const auto& jt : trees) {
    DecisionTree t;
    if (!jt.is_array() || jt.empty()) bad_model("rf tree has no nodes");
    for (const auto& jn : jt) {
      if (!jn.is_array() || jn.size() != 6) bad_model("rf node must have 6 fields");
      TreeNode n;
      n.feature = jn[0].get<int>();
      n.threshold = jn[1].get<double>();
      n.left = jn[2].get<int>();
      n.right = jn[3].get<int>();
      n.counts = {jn[4].get<std::uint32_t>(), jn[5].get<std::uint32_t>()};
      t.nodes.push_back(n);
    }
    const int size = static_cast<int>(t.nodes.size());
    for (int i = 0; i < size; ++i) {
      const auto& n = t.nodes[static_cast<std::size_t>(i)];
      if (n.is_leaf()) {
        if (n.feature != -1) bad_model("rf leaf feature must be -1");
        if (n.counts[0] + n.counts[1] == 0) bad_model("rf leaf has no class counts");
      } else {
        if (n.feature >= static_cast<int>(kNumFeatures)) bad_model("rf split feature out of range");
        // Children always follow their parent, which also rules out cycles.
        if (n.left <= i || n.right <= i || n.left >= size || n.right >= size)
          bad_model("rf child index out of range");
        if (!std::isfinite(n.threshold)) bad_model("rf threshold is not finite");
      }
    }
    p.trees.push_back(std::move(t));
  }
  return p;
}

// FNV-1a, 64 bit.
std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

json to_json(const TrainedModel& model) {
  json j;
  j["version"] = kModelVersion;
  j["algorithm"] = to_string(model.algorithm);
  j["category"] = to_string(model.category);
  j["scaler"] = {{"mean", model.scaler.mean}, {"stdev", model.scaler.stdev}};
  j["params"] = std::visit([](const auto& p) { return params_to_json(p); }, model.params);
  j["train_meta"] = {{"seed", model.meta.seed},
                     {"row_count", model.meta.row_count},
                     {"trained_at", model.meta.trained_at}};
  return j;
}

TrainedModel model_from_json(const json& j) {
  try {
    if (!j.is_object()) bad_model("model document is not a JSON object");
    if (j.at("version").get<std::string>() != kModelVersion)
      bad_model("unsupported model version '" + j.at("version").get<std::string>() + "'");
    TrainedModel m;
    auto algo = parse_algorithm(j.at("algorithm").get<std::string>());
    if (!algo) bad_model("unknown algorithm");
    m.algorithm = *algo;
    auto cat = parse_category(j.at("category").get<std::string>());
    if (!cat) bad_model("unknown category");
    m.category = *cat;
    m.scaler.mean = row_from_json(j.at("scaler").at("mean"), "scaler mean");
    m.scaler.stdev = row_from_json(j.at("scaler").at("stdev"), "scaler stdev");
    for (double s : m.scaler.stdev)
      if (s < 0.0) bad_model("scaler stdev is negative");

    const auto& params = j.at("params");
    switch (m.algorithm) {
      case Algorithm::Gnb: m.params = gnb_from_json(params); break;
      case Algorithm::Knn: m.params = knn_from_json(params); break;
      case Algorithm::Rf: m.params = forest_from_json(params); break;
    }
    const auto& meta = j.at("train_meta");
    m.meta.seed = meta.at("seed").get<std::uint64_t>();
    m.meta.row_count = meta.at("row_count").get<std::size_t>();
    m.meta.trained_at = meta.at("trained_at").get<std::string>();
    if (m.algorithm == Algorithm::Knn &&
        std::get<KnnParams>(m.params).points.size() != m.meta.row_count)
      bad_model("knn stored rows disagree with train_meta.row_count");
    return m;
  } catch (const json::exception& e) {
    bad_model(e.what());
  }
}

std::string serialize_model(const TrainedModel& model) { return to_json(model).dump(); }

TrainedModel deserialize_model(std::string_view text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) bad_model("model is not valid JSON");
  return model_from_json(j);
}

void save_model(const std::filesystem::path& path, const TrainedModel& model) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot create " + tmp);
    out << serialize_model(model) << '\n';
    if (!out) throw Error(ErrorCode::Io, "short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open model " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_model(ss.str());
}

std::string model_digest(const TrainedModel& model) {
  TrainedModel copy = model;
  copy.meta.trained_at.clear();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(serialize_model(copy))));
  return buf;
}

}  // namespace edima
