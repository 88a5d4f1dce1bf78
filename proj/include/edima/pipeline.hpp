#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "edima/features.hpp"
#include "edima/ml.hpp"
#include "edima/policy.hpp"
#include "edima/sessionizer.hpp"

namespace edima {

struct PipelineInput {
  std::string gateway_id;
  std::filesystem::path pcap;
};

struct PipelineOptions {
  Category category = Category::Telnet;
  std::int64_t window_micros = kDefaultWindowMicros;
  unsigned workers = 1;
  std::optional<double> subsample_p;  // thin packets before filtering
  std::uint64_t subsample_seed = 0;
};

/// gateway id = file stem.
PipelineInput input_for(const std::filesystem::path& pcap);

/// Reads a pcap and returns one unlabeled feature vector per session:
/// slice -> (subsample) -> filter -> extract.
std::vector<FeatureVector> extract_file_features(const PipelineInput& input,
                                                 const PipelineOptions& options);

struct SessionResult {
  std::string source;
  FeatureVector features;
  Verdict verdict;
  PolicyAction action;
};

struct RunReport {
  std::vector<SessionResult> sessions;
  std::optional<Metrics> metrics;  // only with ground truth
  std::size_t skipped_frames = 0;
  double elapsed_s = 0.0;
  double sessions_per_second = 0.0;
};

/// Classifies every session of every input and applies the policy rules.
/// Results follow input order regardless of `workers`. `truth` maps a
/// gateway id to the label of all its sessions. Throws
/// Error{CategoryMismatch} when the model targets another category.
RunReport run_pipeline(const std::vector<PipelineInput>& inputs, const TrainedModel& model,
                       const std::vector<PolicyRule>& rules, const PipelineOptions& options,
                       const std::map<std::string, Label>* truth = nullptr);

}  // namespace edima
