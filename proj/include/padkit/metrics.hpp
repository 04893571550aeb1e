#pragma once

// ISO/IEC 30107-3 style presentation-attack metrics.
//
// Polarity: a higher score means "more bona fide", and a sample is accepted
// as bona fide iff score >= threshold. Rates are formed from integer counts
// with a single final division.

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "padkit/dataset.hpp"

namespace padkit {

struct ScoredSample {
  std::string sample_id;
  double score = 0.0;

  bool operator==(const ScoredSample&) const = default;
};

using LabelMap = std::map<std::string, Label>;

struct MetricReport {
  double apcer = 0.0;
  double bpcer = 0.0;
  double acer = 0.0;
  double auc = 0.0;
  double eer = 0.0;
  double threshold = 0.0;
  std::size_t n_attack = 0;
  std::size_t n_bonafide = 0;

  bool operator==(const MetricReport&) const = default;
};

/// Fraction of attacks with score >= threshold.
double apcer(std::span<const double> scores, std::span<const Label> labels, double threshold);
/// Fraction of bona fide samples with score < threshold.
double bpcer(std::span<const double> scores, std::span<const Label> labels, double threshold);
inline double acer(double apcer_value, double bpcer_value) {
  return (apcer_value + bpcer_value) / 2.0;
}

struct EerResult {
  double threshold = 0.0;
  double eer = 0.0;
  double apcer = 0.0;
  double bpcer = 0.0;
};

/// Sweeps the candidate thresholds (one below the minimum, midpoints of
/// adjacent distinct scores, one above the maximum) and keeps the one with
/// the smallest |APCER - BPCER|. Ties go to the smaller mean error, then
/// to the smaller threshold.
EerResult eer_threshold(std::span<const double> scores, std::span<const Label> labels);

/// The candidate thresholds eer_threshold considers, ascending.
std::vector<double> candidate_thresholds(std::span<const double> scores);

/// P(bona fide score > attack score) + 0.5 P(equal).
double auc(std::span<const double> scores, std::span<const Label> labels);

/// Metrics on one split at a fixed threshold; eer is left at the value the
/// caller supplies.
MetricReport report_at(std::span<const double> scores, std::span<const Label> labels,
                       double threshold, double eer);

/// Joins scores with labels by id. Throws ValidationError listing missing,
/// extra and duplicate ids.
std::pair<std::vector<double>, std::vector<Label>> align_scores(
    std::span<const ScoredSample> scores, const LabelMap& labels);

/// Threshold from the dev EER, applied to test.
MetricReport evaluate_submission(std::span<const ScoredSample> dev_scores, const LabelMap& dev_labels,
                                 std::span<const ScoredSample> test_scores,
                                 const LabelMap& test_labels);

struct RankedEntry {
  std::string team;
  MetricReport report;
};

/// Ascending ACER, then ascending APCER, then team name.
std::vector<RankedEntry> rank(std::span<const RankedEntry> reports);
std::vector<RankedEntry> rank(const std::map<std::string, MetricReport>& reports);

void to_json(nlohmann::json& j, const MetricReport& report);
void from_json(const nlohmann::json& j, MetricReport& report);

/// `sample_id,score` CSV. Duplicate ids and non-finite scores are errors.
std::vector<ScoredSample> read_scores_csv(std::istream& in);
void write_scores_csv(std::ostream& out, std::span<const ScoredSample> scores);
/// `sample_id,label` CSV with 0 = attack, 1 = bona fide.
LabelMap read_labels_csv(std::istream& in);
void write_labels_csv(std::ostream& out, const LabelMap& labels);

}  // namespace padkit
