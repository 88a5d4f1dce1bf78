#include "edima/error.hpp"
#include "edima/ml.hpp"

namespace edima {

double f1_score(double precision, double recall) {
  if (precision + recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

Metrics metrics_from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn,
                            std::uint64_t tn) {
  Metrics m{tp, fp, fn, tn};
  const auto total = tp + fp + fn + tn;
  auto ratio = [](std::uint64_t num, std::uint64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  m.accuracy = ratio(tp + tn, total);
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  m.f1 = f1_score(m.precision, m.recall);
  return m;
}

Metrics compute_metrics(std::span<const Label> predicted, std::span<const Label> truth) {
  if (predicted.size() != truth.size())
    throw Error(ErrorCode::LengthMismatch,
                std::to_string(predicted.size()) + " predictions vs " +
                    std::to_string(truth.size()) + " labels");
  if (predicted.empty()) throw Error(ErrorCode::EmptyInput, "no predictions to score");
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool p = predicted[i] == Label::Malicious;
    const bool t = truth[i] == Label::Malicious;
    if (p && t) ++tp;
    else if (p) ++fp;
    else if (t) ++fn;
    else ++tn;
  }
  return metrics_from_counts(tp, fp, fn, tn);
}

nlohmann::json to_json(const Metrics& m) {
  return {{"tp", m.tp},           {"fp", m.fp},
          {"fn", m.fn},           {"tn", m.tn},
          {"accuracy", m.accuracy}, {"precision", m.precision},
          {"recall", m.recall},   {"f1", m.f1}};
}

Metrics metrics_from_json(const nlohmann::json& j) {
  try {
    return metrics_from_counts(j.at("tp").get<std::uint64_t>(), j.at("fp").get<std::uint64_t>(),
                               j.at("fn").get<std::uint64_t>(), j.at("tn").get<std::uint64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedRow, std::string("bad metrics object: ") + e.what());
  }
}

}  // namespace edima
