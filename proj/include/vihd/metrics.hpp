#pragma once

// Evaluation: GREEN-derived labels, AUC and AUG.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vihd/cse.hpp"

namespace vihd::metrics {

/// matched / (matched + errors); 1.0 when both are zero.
double green_score(std::int64_t matched, std::int64_t errors);

struct LabeledSample {
  std::string sample_id;
  std::optional<std::int64_t> matched;
  std::optional<std::int64_t> errors;
  double green = 1.0;
  bool hallucinated = false;  // green < 1
  std::string subset;
};

LabeledSample from_counts(std::string sample_id, std::int64_t matched, std::int64_t errors);
LabeledSample from_green(std::string sample_id, double green);

/// Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 P(tie). `labels` is
/// non-zero for hallucinated samples.
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Samples sorted ascending by score (stable); AUG is the mean over k of
/// the mean GREEN of the first k.
double aug(std::span<const double> scores, std::span<const double> green);

struct RocPoint {
  double threshold;
  double fpr;
  double tpr;
};

/// One point per distinct score, thresholds descending, plus the origin.
std::vector<RocPoint> roc_curve(std::span<const double> scores,
                                std::span<const std::uint8_t> labels);

struct MetricReport {
  double auc = 0.0;
  double aug = 0.0;
  std::size_t n = 0;
  std::size_t n_pos = 0;
};

nlohmann::json to_json(const MetricReport& r);

/// Joins records to labels by sample_id (records define order) and scores
/// with the `cse` field. An optional subset tag filters labels.
MetricReport evaluate(std::span<const cse::DetectionRecord> records,
                      std::span<const LabeledSample> labels, const std::string& subset = {},
                      std::vector<RocPoint>* roc = nullptr);

/// CSV `sample_id,matched,errors[,subset]` or JSON Lines `{sample_id, green}`.
std::vector<LabeledSample> read_labels(const std::filesystem::path& path);
void write_labels_jsonl(std::span<const LabeledSample> labels, const std::filesystem::path& path);

std::vector<cse::DetectionRecord> read_records(const std::filesystem::path& path);
void write_records(std::span<const cse::DetectionRecord> records, const std::filesystem::path& path);

void write_roc_csv(std::span<const RocPoint> roc, const std::filesystem::path& path);

}  // namespace vihd::metrics
