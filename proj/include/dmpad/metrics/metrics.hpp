#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmpad/data/manifest.hpp"

namespace dmpad::metrics {

/// Higher score = more attack-like.
struct ScoredSample {
  std::string sample_id;
  std::string subject_id;
  data::Label label = data::Label::bona_fide;
  std::optional<std::string> attack_type;
  double score = 0.0;
};

/// All rates in percent. A sample is predicted attack iff score >= threshold.
struct MetricsReport {
  double accuracy = 0.0;
  double apcer = 0.0;
  double bpcer = 0.0;
  double acer = 0.0;
  double eer = 0.0;
  double eer_threshold = 0.0;
  double tdr_at_fdr = 0.0;
  double fdr_percent = 1.0;
  double operating_threshold = 0.5;
  std::size_t n_bona_fide = 0;
  std::size_t n_attack = 0;
  std::map<std::string, double> apcer_per_attack_type;
};

/// Threshold-dependent fields only (accuracy, APCER, BPCER, ACER, breakdown).
MetricsReport compute_pad_metrics(const std::vector<ScoredSample>& scores, double threshold);

struct EerResult {
  double eer = 0.0;        // percent
  double threshold = 0.0;  // interpolated operating point
};

/// Sweeps every distinct score plus +-inf and interpolates linearly where
/// APCER - BPCER changes sign.
EerResult eer(const std::vector<ScoredSample>& scores);

/// TDR (% attacks scored >= t) at the smallest t whose bona fide false
/// detection rate is at most `fdr_percent`.
double tdr_at_fdr(const std::vector<ScoredSample>& scores, double fdr_percent = 1.0);

/// Every field of MetricsReport.
MetricsReport full_report(const std::vector<ScoredSample>& scores, double threshold, double fdr_percent = 1.0);

inline constexpr const char* kScoreHeader = "sample_id,subject_id,label,attack_type,score";

void write_scores_csv(const std::filesystem::path& path, const std::vector<ScoredSample>& scores);
std::vector<ScoredSample> read_scores_csv(const std::filesystem::path& path);

nlohmann::ordered_json report_json(const MetricsReport& r);
/// Per-fold reports with mean and sample standard deviation of every rate.
nlohmann::ordered_json folds_json(const std::vector<MetricsReport>& folds);
void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j);

}  // namespace dmpad::metrics
