#include "edima/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <mutex>
#include <thread>

#include "edima/capture.hpp"
#include "edima/error.hpp"
#include "edima/rng.hpp"

namespace edima {

PipelineInput input_for(const std::filesystem::path& pcap) {
  return {pcap.stem().string(), pcap};
}

namespace {

struct FileFeatures {
  std::vector<FeatureVector> features;
  std::size_t skipped = 0;
};

FileFeatures features_of(const PipelineInput& input, const PipelineOptions& options) {
  const auto parsed = read_pcap_file(input.pcap);
  const auto ports = default_target_ports(options.category);
  FileFeatures out;
  out.skipped = parsed.skipped;
  auto sessions = slice_sessions(parsed.records, input.gateway_id, options.window_micros);
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    const TrafficSession* session = &sessions[i];
    TrafficSession thinned;
    if (options.subsample_p) {
      thinned = subsample(*session, *options.subsample_p, std::nullopt,
                          derive_seed(options.subsample_seed, i));
      session = &thinned;
    }
    out.features.push_back(extract_features(filter_session(*session, ports), options.category));
  }
  return out;
}

}  // namespace

std::vector<FeatureVector> extract_file_features(const PipelineInput& input,
                                                 const PipelineOptions& options) {
  return features_of(input, options).features;
}

RunReport run_pipeline(const std::vector<PipelineInput>& inputs, const TrainedModel& model,
                       const std::vector<PolicyRule>& rules, const PipelineOptions& options,
                       const std::map<std::string, Label>* truth) {
  if (model.category != options.category)
    throw Error(ErrorCode::CategoryMismatch,
                "model was trained for " + std::string(to_string(model.category)) +
                    " but --category is " + std::string(to_string(options.category)));

  const auto started = std::chrono::steady_clock::now();
  std::vector<FileFeatures> per_file(inputs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&] {
    for (std::size_t i = next++; i < inputs.size(); i = next++) {
      try {
        per_file[i] = features_of(inputs[i], options);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const unsigned width = std::max(1u, options.workers);
    for (unsigned w = 1; w < width; ++w) pool.emplace_back(work);
    work();
  }
  if (failure) std::rethrow_exception(failure);

  RunReport report;
  std::vector<Label> predicted, actual;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    report.skipped_frames += per_file[i].skipped;
    for (auto& fv : per_file[i].features) {
      const auto pred = predict(model, fv);
      SessionResult r;
      r.source = inputs[i].pcap.string();
      r.verdict = {fv.gateway, fv.window_start_us, fv.category, pred.label, pred.score};
      // Actions are stamped with the end of the session they judge, which
      // keeps the action log reproducible.
      r.action = evaluate(rules, r.verdict, fv.window_start_us + options.window_micros);
      if (truth) {
        if (auto it = truth->find(inputs[i].gateway_id); it != truth->end()) {
          fv.label = it->second;
          predicted.push_back(pred.label);
          actual.push_back(it->second);
        }
      }
      r.features = std::move(fv);
      report.sessions.push_back(std::move(r));
    }
  }
  if (!predicted.empty()) report.metrics = compute_metrics(predicted, actual);

  report.elapsed_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  report.sessions_per_second =
      report.elapsed_s > 0.0 ? static_cast<double>(report.sessions.size()) / report.elapsed_s : 0.0;
  return report;
}

}  // namespace edima
