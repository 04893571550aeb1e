#pragma once

// Two-phase challenge simulator: submission gatekeeping, per-day budgets,
// label access control and leaderboards.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "padkit/dataset.hpp"
#include "padkit/metrics.hpp"

namespace padkit {

enum class Phase { development, final };

std::string_view to_string(Phase phase);
Phase phase_from_string(std::string_view text);

struct PhaseConfig {
  Phase phase = Phase::development;
  /// Accepted submissions per team per day; nullopt means unlimited.
  std::optional<std::size_t> submission_budget_per_day;
  std::set<Split> labels_visible;

  /// Train labels only, unlimited submissions unless a budget is given.
  static PhaseConfig development(std::optional<std::size_t> budget = std::nullopt);
  /// Train and dev labels, two submissions per day by default.
  static PhaseConfig final_phase(std::size_t budget = 2);
  bool can_read(Split split) const { return labels_visible.contains(split); }
};

/// Read access to labels as granted by one phase.
class TeamView {
 public:
  TeamView(const class LabelVault& vault, PhaseConfig phase) : vault_(&vault), phase_(std::move(phase)) {}
  /// Throws AccessDenied for splits the phase does not expose.
  const LabelMap& labels(Split split) const;
  const PhaseConfig& phase() const { return phase_; }

 private:
  const LabelVault* vault_;
  PhaseConfig phase_;
};

/// Organizer-held ground truth. Teams only ever see a TeamView.
class LabelVault {
 public:
  LabelVault(LabelMap train, LabelMap dev, LabelMap test);
  static LabelVault from_catalog(std::span<const SampleRecord> catalog,
                                 const ProtocolManifest& manifest);

  TeamView view(const PhaseConfig& phase) const { return TeamView(*this, phase); }

 private:
  friend class TeamView;
  friend MetricReport score_submission(std::span<const ScoredSample> scores, Phase phase,
                                       const LabelVault& vault);
  const LabelMap& split(Split s) const;
  LabelMap train_, dev_, test_;
};

struct Submission {
  std::string team;
  Phase phase = Phase::development;
  std::size_t sequence_number = 0;
  /// Logical day counter supplied by the driver.
  std::size_t day = 0;
  /// Contents of the `sample_id,score` file.
  std::string score_file;
  /// A precomputed report that bypasses validation and scoring. Used to
  /// replay published results through the leaderboard.
  std::optional<MetricReport> injected_report;
};

struct SubmissionIssue {
  /// 1-based line in the file (the header is line 1); 0 for file-level issues.
  std::size_t row = 0;
  std::string message;

  bool operator==(const SubmissionIssue&) const = default;
};

struct ValidationReport {
  std::vector<SubmissionIssue> issues;
  std::vector<ScoredSample> scores;

  bool ok() const { return issues.empty(); }
  std::string summary() const;
};

/// Checks the header, exact coverage of expected_ids, duplicates, column
/// count and finite scores in [0,1]. Every violation is reported.
ValidationReport validate_submission(std::string_view file, std::span<const std::string> expected_ids);

/// Ids a submission must score in the given phase: dev in development,
/// dev and test in the final phase.
std::vector<std::string> expected_ids(const ProtocolManifest& manifest, Phase phase);

struct AuditEntry {
  std::string team;
  Phase phase = Phase::development;
  std::size_t day = 0;
  std::size_t sequence_number = 0;
  bool accepted = false;
  bool injected = false;
  std::string reason;
  std::vector<SubmissionIssue> issues;
  std::optional<MetricReport> report;
  /// Accepted submissions by this team on this day, including this one.
  std::size_t day_count = 0;
};

struct LeaderboardRow {
  std::size_t rank = 0;
  std::string team;
  double acer = 0.0;
  double apcer = 0.0;
  double bpcer = 0.0;
  double auc = 0.0;
  /// Sequence number of the submission the row shows.
  std::size_t sequence_number = 0;

  bool operator==(const LeaderboardRow&) const = default;
};

struct Leaderboard {
  Phase phase = Phase::final;
  std::vector<LeaderboardRow> rows;

  bool operator==(const Leaderboard&) const = default;
};

/// Rows in metrics.rank order with 1-based ranks.
Leaderboard make_leaderboard(Phase phase, const std::map<std::string, std::pair<MetricReport, std::size_t>>& latest);

/// Metrics on dev at the dev-EER threshold in development; dev-EER threshold
/// transferred to test in the final phase. Labels come from the vault, never
/// from the submitting team.
MetricReport score_submission(std::span<const ScoredSample> scores, Phase phase,
                              const LabelVault& vault);

class ChallengeServer {
 public:
  ChallengeServer(ProtocolManifest manifest, LabelVault vault,
                  PhaseConfig development = PhaseConfig::development(),
                  PhaseConfig final = PhaseConfig::final_phase());

  const PhaseConfig& phase_config(Phase phase) const;
  TeamView view(Phase phase) const { return vault_.view(phase_config(phase)); }
  const ProtocolManifest& manifest() const { return manifest_; }

  /// Validation and scoring without touching any state.
  AuditEntry evaluate(const Submission& submission) const;
  /// Applies the budget to an evaluated submission and records the decision.
  AuditEntry commit(AuditEntry evaluated);
  AuditEntry submit(const Submission& submission) { return commit(evaluate(submission)); }
  /// Records a failure raised before a submission could be formed.
  void record_failure(const Submission& submission, std::string reason);

  Leaderboard leaderboard(Phase phase) const;
  const std::vector<AuditEntry>& audit() const { return audit_; }
  std::size_t accepted_on(std::string_view team, Phase phase, std::size_t day) const;

 private:
  ProtocolManifest manifest_;
  LabelVault vault_;
  PhaseConfig development_;
  PhaseConfig final_;
  std::vector<AuditEntry> audit_;
  std::map<std::tuple<std::string, Phase, std::size_t>, std::size_t> day_counts_;
  std::map<Phase, std::map<std::string, std::pair<MetricReport, std::size_t>>> latest_;
};

struct TeamContext {
  Phase phase = Phase::development;
  std::size_t day = 0;
  std::size_t attempt = 0;
  std::span<const std::string> ids;
  /// Unlabelled features by id; may be null.
  const std::unordered_map<std::string, std::vector<double>>* features = nullptr;
  const TeamView* labels = nullptr;
  std::uint64_t seed = 0;
};

struct TeamOutput {
  std::string score_file;
  std::optional<MetricReport> injected_report;
};

struct ScriptedTeam {
  std::string name;
  std::size_t attempts_per_day = 1;
  std::function<TeamOutput(const TeamContext&)> generate;
};

std::string format_scores(std::span<const ScoredSample> scores);

/// Scores equal to the given labels. Built by the simulator from organizer
/// data; it never goes through a TeamView.
ScriptedTeam oracle_team(std::string name, LabelMap truth);
/// Scores equal to one minus the labels.
ScriptedTeam anti_oracle_team(std::string name, LabelMap truth);
/// Uniform random scores.
ScriptedTeam random_team(std::string name, std::size_t attempts_per_day = 1);
/// Labels blurred by Gaussian noise and clamped to [0,1].
ScriptedTeam noisy_team(std::string name, LabelMap truth, double noise);
/// Replays a fixed report without a score file.
ScriptedTeam injected_team(std::string name, MetricReport report);
/// Tries to read the labels of `split` through its TeamView.
ScriptedTeam peeking_team(std::string name, Split split);
/// Scores from a fixed function of the unlabelled feature.
ScriptedTeam feature_team(std::string name, std::function<double(std::span<const double>)> scorer);

struct ChallengeConfig {
  std::size_t development_days = 2;
  std::size_t final_days = 2;
  PhaseConfig development = PhaseConfig::development();
  PhaseConfig final = PhaseConfig::final_phase();
  std::uint64_t seed = 1;
};

struct ChallengeResult {
  Leaderboard development;
  Leaderboard final;
  std::vector<AuditEntry> audit;
};

/// Development days, then final days. Each day every team submits
/// attempts_per_day times; submissions of a day are scored concurrently and
/// committed in team order by a single writer.
ChallengeResult run_challenge(const ChallengeConfig& config, const ProtocolManifest& manifest,
                              const LabelVault& vault, std::span<const ScriptedTeam> teams,
                              const std::unordered_map<std::string, std::vector<double>>* features = nullptr);

/// The nine published final-phase results, in printed order.
std::vector<RankedEntry> published_final_results();

struct ReportArtifacts {
  std::string table;
  nlohmann::json json;
  std::string csv;
};

/// Percent table with two decimals, leaderboard JSON and CSV.
ReportArtifacts report(const Leaderboard& leaderboard);
std::string format_percent(double rate);

void to_json(nlohmann::json& j, const LeaderboardRow& row);
void from_json(const nlohmann::json& j, LeaderboardRow& row);
/// An ordered array of row records.
nlohmann::json leaderboard_to_json(const Leaderboard& leaderboard);
Leaderboard leaderboard_from_json(const nlohmann::json& j, Phase phase = Phase::final);
std::string leaderboard_to_csv(const Leaderboard& leaderboard);
Leaderboard leaderboard_from_csv(std::string_view csv, Phase phase = Phase::final);

void to_json(nlohmann::json& j, const AuditEntry& entry);
void write_audit_log(std::ostream& out, std::span<const AuditEntry> audit);

}  // namespace padkit
