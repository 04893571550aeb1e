#include "padkit/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <ostream>
#include <random>
#include <sstream>
#include <unordered_set>

#include "padkit/csv.hpp"
#include "padkit/error.hpp"

namespace padkit {

std::string_view to_string(Phase phase) {
  return phase == Phase::development ? "development" : "final";
}

Phase phase_from_string(std::string_view text) {
  if (text == "development") return Phase::development;
  if (text == "final") return Phase::final;
  throw ConfigError("unknown phase '" + std::string(text) + "'");
}

PhaseConfig PhaseConfig::development(std::optional<std::size_t> budget) {
  return {Phase::development, budget, {Split::train}};
}

PhaseConfig PhaseConfig::final_phase(std::size_t budget) {
  return {Phase::final, budget, {Split::train, Split::dev}};
}

const LabelMap& TeamView::labels(Split split) const {
  if (!phase_.can_read(split)) {
    throw AccessDenied(std::string(to_string(split)) + " labels are not visible in the " +
                       std::string(to_string(phase_.phase)) + " phase");
  }
  return vault_->split(split);
}

LabelVault::LabelVault(LabelMap train, LabelMap dev, LabelMap test)
    : train_(std::move(train)), dev_(std::move(dev)), test_(std::move(test)) {}

LabelVault LabelVault::from_catalog(std::span<const SampleRecord> catalog,
                                    const ProtocolManifest& manifest) {
  std::unordered_map<std::string, Label> by_id;
  for (const auto& s : catalog) by_id.emplace(s.sample_id, s.label);
  auto collect = [&](const std::vector<std::string>& ids) {
    LabelMap out;
    for (const auto& id : ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw ValidationError("manifest id '" + id + "' not in catalog");
      out.emplace(id, it->second);
    }
    return out;
  };
  return LabelVault(collect(manifest.train_ids), collect(manifest.dev_ids),
                    collect(manifest.test_ids));
}

const LabelMap& LabelVault::split(Split s) const {
  switch (s) {
    case Split::train: return train_;
    case Split::dev: return dev_;
    case Split::test: return test_;
  }
  return train_;
}

std::string ValidationReport::summary() const {
  std::ostringstream out;
  for (const auto& issue : issues) {
    if (issue.row > 0) out << "row " << issue.row << ": ";
    out << issue.message << '\n';
  }
  return out.str();
}

ValidationReport validate_submission(std::string_view file,
                                     std::span<const std::string> expected_ids) {
  ValidationReport report;
  auto issue = [&](std::size_t row, std::string message) {
    report.issues.push_back({row, std::move(message)});
  };
  const std::unordered_set<std::string> expected(expected_ids.begin(), expected_ids.end());
  std::unordered_map<std::string, std::size_t> first_row;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool saw_header = false;
  while (pos <= file.size()) {
    std::size_t nl = file.find('\n', pos);
    const bool last = nl == std::string_view::npos;
    if (last) nl = file.size();
    std::string_view line = file.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (last && line.empty()) break;
    const auto fields = csv::split_line(line);
    if (!saw_header) {
      saw_header = true;
      if (fields.size() != 2 || fields[0] != "sample_id" || fields[1] != "score") {
        issue(line_no, "header must be 'sample_id,score'");
      }
      continue;
    }
    if (fields.size() == 1 && fields[0].empty()) {
      issue(line_no, "blank line");
      continue;
    }
    if (fields.size() != 2) {
      issue(line_no, "expected 2 columns, found " + std::to_string(fields.size()));
      continue;
    }
    const std::string& id = fields[0];
    if (id.empty()) {
      issue(line_no, "empty sample_id");
      continue;
    }
    const auto value = csv::parse_double(fields[1]);
    bool row_ok = true;
    if (!value) {
      issue(line_no, "score '" + fields[1] + "' is not a number");
      row_ok = false;
    } else if (!std::isfinite(*value)) {
      issue(line_no, "score '" + fields[1] + "' is not finite");
      row_ok = false;
    } else if (*value < 0.0 || *value > 1.0) {
      issue(line_no, "score " + fields[1] + " outside [0,1]");
      row_ok = false;
    }
    if (auto [it, fresh] = first_row.emplace(id, line_no); !fresh) {
      issue(line_no, "duplicate sample_id '" + id + "' (first seen on row " +
                         std::to_string(it->second) + ")");
      continue;
    }
    if (!expected.contains(id)) {
      issue(line_no, "unexpected sample_id '" + id + "'");
      continue;
    }
    if (row_ok) report.scores.push_back({id, *value});
  }
  if (!saw_header) issue(0, "empty file");
  for (const auto& id : expected_ids) {
    if (!first_row.contains(id)) issue(0, "missing sample_id '" + id + "'");
  }
  if (!report.ok()) report.scores.clear();
  return report;
}

std::vector<std::string> expected_ids(const ProtocolManifest& manifest, Phase phase) {
  std::vector<std::string> ids = manifest.dev_ids;
  if (phase == Phase::final) ids.insert(ids.end(), manifest.test_ids.begin(), manifest.test_ids.end());
  return ids;
}

namespace {

std::vector<ScoredSample> restrict_to(std::span<const ScoredSample> scores, const LabelMap& labels) {
  std::vector<ScoredSample> out;
  for (const auto& s : scores) {
    if (labels.contains(s.sample_id)) out.push_back(s);
  }
  return out;
}

}  // namespace

MetricReport score_submission(std::span<const ScoredSample> scores, Phase phase,
                              const LabelVault& vault) {
  const LabelMap& dev = vault.split(Split::dev);
  const auto dev_scores = restrict_to(scores, dev);
  if (phase == Phase::development) {
    auto [s, l] = align_scores(dev_scores, dev);
    const EerResult e = eer_threshold(s, l);
    MetricReport r = report_at(s, l, e.threshold, e.eer);
    return r;
  }
  const LabelMap& test = vault.split(Split::test);
  return evaluate_submission(dev_scores, dev, restrict_to(scores, test), test);
}

Leaderboard make_leaderboard(
    Phase phase, const std::map<std::string, std::pair<MetricReport, std::size_t>>& latest) {
  std::vector<RankedEntry> entries;
  for (const auto& [team, entry] : latest) entries.push_back({team, entry.first});
  Leaderboard board;
  board.phase = phase;
  std::size_t rank_no = 0;
  for (const auto& e : rank(entries)) {
    board.rows.push_back({++rank_no, e.team, e.report.acer, e.report.apcer, e.report.bpcer,
                          e.report.auc, latest.at(e.team).second});
  }
  return board;
}

ChallengeServer::ChallengeServer(ProtocolManifest manifest, LabelVault vault,
                                 PhaseConfig development, PhaseConfig final)
    : manifest_(std::move(manifest)),
      vault_(std::move(vault)),
      development_(std::move(development)),
      final_(std::move(final)) {
  if (development_.phase != Phase::development || final_.phase != Phase::final) {
    throw ConfigError("phase configs are swapped");
  }
  if (development_.can_read(Split::dev) || development_.can_read(Split::test) ||
      final_.can_read(Split::test)) {
    throw ConfigError("phase config exposes labels beyond its phase");
  }
}

const PhaseConfig& ChallengeServer::phase_config(Phase phase) const {
  return phase == Phase::development ? development_ : final_;
}

AuditEntry ChallengeServer::evaluate(const Submission& submission) const {
  AuditEntry entry;
  entry.team = submission.team;
  entry.phase = submission.phase;
  entry.day = submission.day;
  entry.sequence_number = submission.sequence_number;
  if (submission.injected_report) {
    entry.injected = true;
    entry.report = submission.injected_report;
    return entry;
  }
  const auto ids = expected_ids(manifest_, submission.phase);
  ValidationReport v = validate_submission(submission.score_file, ids);
  if (!v.ok()) {
    entry.issues = std::move(v.issues);
    entry.reason = "validation failed";
    return entry;
  }
  try {
    entry.report = score_submission(v.scores, submission.phase, vault_);
  } catch (const Error& e) {
    entry.reason = std::string("scoring failed: ") + e.what();
  }
  return entry;
}

AuditEntry ChallengeServer::commit(AuditEntry entry) {
  const auto key = std::make_tuple(entry.team, entry.phase, entry.day);
  std::size_t& count = day_counts_[key];
  entry.day_count = count;
  if (entry.report) {
    const auto& budget = phase_config(entry.phase).submission_budget_per_day;
    if (budget && count >= *budget) {
      entry.reason = "budget exceeded: day " + std::to_string(entry.day) + ", " +
                     std::to_string(count) + " of " + std::to_string(*budget) + " already accepted";
      entry.report.reset();
    } else {
      entry.accepted = true;
      entry.day_count = ++count;
      latest_[entry.phase][entry.team] = {*entry.report, entry.sequence_number};
    }
  }
  audit_.push_back(entry);
  return entry;
}

void ChallengeServer::record_failure(const Submission& submission, std::string reason) {
  AuditEntry entry;
  entry.team = submission.team;
  entry.phase = submission.phase;
  entry.day = submission.day;
  entry.sequence_number = submission.sequence_number;
  entry.reason = std::move(reason);
  entry.day_count = day_counts_[std::make_tuple(entry.team, entry.phase, entry.day)];
  audit_.push_back(std::move(entry));
}

Leaderboard ChallengeServer::leaderboard(Phase phase) const {
  auto it = latest_.find(phase);
  if (it == latest_.end()) return Leaderboard{phase, {}};
  return make_leaderboard(phase, it->second);
}

std::size_t ChallengeServer::accepted_on(std::string_view team, Phase phase, std::size_t day) const {
  auto it = day_counts_.find(std::make_tuple(std::string(team), phase, day));
  return it == day_counts_.end() ? 0 : it->second;
}

std::string format_scores(std::span<const ScoredSample> scores) {
  std::string out = "sample_id,score\n";
  for (const auto& s : scores) out += s.sample_id + "," + csv::format_double(s.score) + "\n";
  return out;
}

namespace {

ScriptedTeam label_team(std::string name, LabelMap truth, bool inverted) {
  ScriptedTeam team;
  team.name = std::move(name);
  team.generate = [truth = std::move(truth), inverted](const TeamContext& ctx) {
    std::vector<ScoredSample> scores;
    for (const auto& id : ctx.ids) {
      auto it = truth.find(id);
      const double y = it != truth.end() && it->second == Label::bonafide ? 1.0 : 0.0;
      scores.push_back({id, inverted ? 1.0 - y : y});
    }
    return TeamOutput{format_scores(scores), std::nullopt};
  };
  return team;
}

}  // namespace

ScriptedTeam oracle_team(std::string name, LabelMap truth) {
  return label_team(std::move(name), std::move(truth), false);
}

ScriptedTeam anti_oracle_team(std::string name, LabelMap truth) {
  return label_team(std::move(name), std::move(truth), true);
}

ScriptedTeam random_team(std::string name, std::size_t attempts_per_day) {
  ScriptedTeam team;
  team.name = std::move(name);
  team.attempts_per_day = attempts_per_day;
  team.generate = [](const TeamContext& ctx) {
    std::mt19937_64 rng(ctx.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<ScoredSample> scores;
    for (const auto& id : ctx.ids) scores.push_back({id, u(rng)});
    return TeamOutput{format_scores(scores), std::nullopt};
  };
  return team;
}

ScriptedTeam noisy_team(std::string name, LabelMap truth, double noise) {
  if (!(noise >= 0.0)) throw ConfigError("noise must be nonnegative");
  ScriptedTeam team;
  team.name = std::move(name);
  team.generate = [truth = std::move(truth), noise](const TeamContext& ctx) {
    std::mt19937_64 rng(ctx.seed);
    std::normal_distribution<double> n(0.0, noise);
    std::vector<ScoredSample> scores;
    for (const auto& id : ctx.ids) {
      auto it = truth.find(id);
      const double y = it != truth.end() && it->second == Label::bonafide ? 1.0 : 0.0;
      scores.push_back({id, std::clamp(y + n(rng), 0.0, 1.0)});
    }
    return TeamOutput{format_scores(scores), std::nullopt};
  };
  return team;
}

ScriptedTeam injected_team(std::string name, MetricReport report) {
  ScriptedTeam team;
  team.name = std::move(name);
  team.generate = [report](const TeamContext&) { return TeamOutput{"", report}; };
  return team;
}

ScriptedTeam peeking_team(std::string name, Split split) {
  ScriptedTeam team;
  team.name = std::move(name);
  team.generate = [split](const TeamContext& ctx) {
    if (ctx.labels == nullptr) throw AccessDenied("no label view");
    const LabelMap& labels = ctx.labels->labels(split);
    std::vector<ScoredSample> scores;
    for (const auto& id : ctx.ids) {
      auto it = labels.find(id);
      scores.push_back({id, it != labels.end() && it->second == Label::bonafide ? 1.0 : 0.0});
    }
    return TeamOutput{format_scores(scores), std::nullopt};
  };
  return team;
}

ScriptedTeam feature_team(std::string name, std::function<double(std::span<const double>)> scorer) {
  ScriptedTeam team;
  team.name = std::move(name);
  team.generate = [scorer = std::move(scorer)](const TeamContext& ctx) {
    if (ctx.features == nullptr) throw ValidationError("no features available");
    std::vector<ScoredSample> scores;
    for (const auto& id : ctx.ids) scores.push_back({id, scorer(ctx.features->at(id))});
    return TeamOutput{format_scores(scores), std::nullopt};
  };
  return team;
}

ChallengeResult run_challenge(const ChallengeConfig& config, const ProtocolManifest& manifest,
                              const LabelVault& vault, std::span<const ScriptedTeam> teams,
                              const std::unordered_map<std::string, std::vector<double>>* features) {
  std::set<std::string> names;
  for (const auto& t : teams) {
    if (!names.insert(t.name).second) throw ConfigError("duplicate team name '" + t.name + "'");
    if (!t.generate) throw ConfigError("team '" + t.name + "' has no generator");
  }
  ChallengeServer server(manifest, vault, config.development, config.final);
  std::vector<std::size_t> sequence(teams.size(), 0);
  std::size_t day = 0;
  for (Phase phase : {Phase::development, Phase::final}) {
    const std::size_t days = phase == Phase::development ? config.development_days : config.final_days;
    const auto ids = expected_ids(manifest, phase);
    const TeamView view = server.view(phase);
    for (std::size_t d = 0; d < days; ++d, ++day) {
      struct Pending {
        Submission submission;
        std::optional<std::string> failure;
        std::future<AuditEntry> evaluated;
      };
      std::vector<Pending> pending;
      for (std::size_t ti = 0; ti < teams.size(); ++ti) {
        for (std::size_t a = 0; a < teams[ti].attempts_per_day; ++a) {
          Pending p;
          p.submission.team = teams[ti].name;
          p.submission.phase = phase;
          p.submission.day = day;
          p.submission.sequence_number = ++sequence[ti];
          std::seed_seq seq{config.seed, static_cast<std::uint64_t>(ti), static_cast<std::uint64_t>(day),
                            static_cast<std::uint64_t>(a)};
          std::array<std::uint64_t, 1> seed{};
          seq.generate(seed.begin(), seed.end());
          TeamContext ctx{phase, day, a, ids, features, &view, seed[0]};
          try {
            TeamOutput out = teams[ti].generate(ctx);
            p.submission.score_file = std::move(out.score_file);
            p.submission.injected_report = out.injected_report;
          } catch (const AccessDenied& e) {
            p.failure = std::string("access denied: ") + e.what();
          } catch (const std::exception& e) {
            p.failure = std::string("team error: ") + e.what();
          }
          pending.push_back(std::move(p));
        }
      }
      for (auto& p : pending) {
        if (p.failure) continue;
        p.evaluated = std::async(std::launch::async,
                                 [&server, &s = p.submission] { return server.evaluate(s); });
      }
      for (auto& p : pending) {
        if (p.failure) {
          server.record_failure(p.submission, *p.failure);
        } else {
          server.commit(p.evaluated.get());
        }
      }
    }
  }
  return {server.leaderboard(Phase::development), server.leaderboard(Phase::final), server.audit()};
}

std::vector<RankedEntry> published_final_results() {
  struct Row {
    const char* team;
    double apcer, bpcer, acer, auc;
  };
  static constexpr Row rows[] = {
      {"MateoH", 5.07, 4.38, 4.73, 98.38},     {"CTEL_AI", 9.20, 1.91, 5.56, 98.21},
      {"horsego", 8.17, 4.26, 6.22, 96.97},    {"hexianhua", 11.21, 2.94, 7.08, 97.83},
      {"OPDAI", 9.18, 5.13, 7.16, 97.38},      {"SeaRecluse", 15.92, 3.86, 9.89, 96.02},
      {"XiangR", 11.35, 8.57, 9.96, 95.80},    {"Chenyifan", 14.12, 7.89, 11.01, 94.39},
      {"ioNetworks", 15.47, 8.53, 12.00, 95.13},
  };
  std::vector<RankedEntry> out;
  for (const auto& r : rows) {
    MetricReport m;
    m.apcer = r.apcer / 100.0;
    m.bpcer = r.bpcer / 100.0;
    m.acer = r.acer / 100.0;
    m.auc = r.auc / 100.0;
    out.push_back({r.team, m});
  }
  return out;
}

std::string format_percent(double rate) {
  const long long hundredths = std::llround(rate * 10000.0);
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s%lld.%02lld", hundredths < 0 ? "-" : "",
                std::llabs(hundredths) / 100, std::llabs(hundredths) % 100);
  return buf;
}

void to_json(nlohmann::json& j, const LeaderboardRow& row) {
  j = {{"rank", row.rank}, {"team", row.team}, {"acer", row.acer},  {"apcer", row.apcer},
       {"bpcer", row.bpcer}, {"auc", row.auc}, {"sequence_number", row.sequence_number}};
}

void from_json(const nlohmann::json& j, LeaderboardRow& row) {
  j.at("rank").get_to(row.rank);
  j.at("team").get_to(row.team);
  j.at("acer").get_to(row.acer);
  j.at("apcer").get_to(row.apcer);
  j.at("bpcer").get_to(row.bpcer);
  j.at("auc").get_to(row.auc);
  row.sequence_number = j.value("sequence_number", std::size_t{0});
}

nlohmann::json leaderboard_to_json(const Leaderboard& leaderboard) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : leaderboard.rows) rows.push_back(r);
  return rows;
}

Leaderboard leaderboard_from_json(const nlohmann::json& j, Phase phase) {
  if (!j.is_array()) throw ValidationError("leaderboard JSON must be an array of rows");
  Leaderboard board;
  board.phase = phase;
  try {
    for (const auto& r : j) board.rows.push_back(r.get<LeaderboardRow>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed leaderboard row: ") + e.what());
  }
  return board;
}

std::string leaderboard_to_csv(const Leaderboard& leaderboard) {
  std::string out = "rank,team,acer,apcer,bpcer,auc,sequence_number\n";
  for (const auto& r : leaderboard.rows) {
    if (r.team.find_first_of(",\r\n") != std::string::npos) {
      throw ValidationError("team name '" + r.team + "' cannot be written as CSV");
    }
    out += std::to_string(r.rank) + "," + r.team + "," + csv::format_double(r.acer) + "," +
           csv::format_double(r.apcer) + "," + csv::format_double(r.bpcer) + "," +
           csv::format_double(r.auc) + "," + std::to_string(r.sequence_number) + "\n";
  }
  return out;
}

Leaderboard leaderboard_from_csv(std::string_view text, Phase phase) {
  Leaderboard board;
  board.phase = phase;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  auto number = [&](const std::string& field) {
    const auto v = csv::parse_double(field);
    if (!v || !std::isfinite(*v)) {
      throw ParseError("line " + std::to_string(line_no) + ": bad number '" + field + "'");
    }
    return *v;
  };
  auto count = [&](const std::string& field) {
    const double v = number(field);
    if (v < 0.0 || v != std::floor(v)) {
      throw ParseError("line " + std::to_string(line_no) + ": bad integer '" + field + "'");
    }
    return static_cast<std::size_t>(v);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto f = csv::split_line(line);
    if (line_no == 1) {
      if (f != std::vector<std::string>{"rank", "team", "acer", "apcer", "bpcer", "auc",
                                        "sequence_number"}) {
        throw ParseError("unexpected leaderboard CSV header");
      }
      continue;
    }
    if (f.size() == 1 && f[0].empty()) continue;
    if (f.size() != 7) throw ParseError("line " + std::to_string(line_no) + ": expected 7 columns");
    board.rows.push_back(
        {count(f[0]), f[1], number(f[2]), number(f[3]), number(f[4]), number(f[5]), count(f[6])});
  }
  if (line_no == 0) throw ParseError("empty leaderboard CSV");
  return board;
}

ReportArtifacts report(const Leaderboard& leaderboard) {
  ReportArtifacts out;
  std::size_t width = 4;
  for (const auto& r : leaderboard.rows) width = std::max(width, r.team.size());
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-4s  %-*s  %8s  %8s  %8s  %8s\n", "Rank", static_cast<int>(width),
                "Team", "ACER(%)", "APCER(%)", "BPCER(%)", "AUC(%)");
  out.table = buf;
  for (const auto& r : leaderboard.rows) {
    std::snprintf(buf, sizeof buf, "%-4zu  %-*s  %8s  %8s  %8s  %8s\n", r.rank,
                  static_cast<int>(width), r.team.c_str(), format_percent(r.acer).c_str(),
                  format_percent(r.apcer).c_str(), format_percent(r.bpcer).c_str(),
                  format_percent(r.auc).c_str());
    out.table += buf;
  }
  out.json = leaderboard_to_json(leaderboard);
  out.csv = leaderboard_to_csv(leaderboard);
  return out;
}

void to_json(nlohmann::json& j, const AuditEntry& e) {
  nlohmann::json issues = nlohmann::json::array();
  for (const auto& i : e.issues) issues.push_back({{"row", i.row}, {"message", i.message}});
  j = {{"team", e.team},
       {"phase", to_string(e.phase)},
       {"day", e.day},
       {"sequence_number", e.sequence_number},
       {"accepted", e.accepted},
       {"injected", e.injected},
       {"reason", e.reason},
       {"issues", issues},
       {"day_count", e.day_count}};
  j["report"] = e.report ? nlohmann::json(*e.report) : nlohmann::json(nullptr);
}

void write_audit_log(std::ostream& out, std::span<const AuditEntry> audit) {
  for (const auto& e : audit) out << nlohmann::json(e).dump() << '\n';
}

}  // namespace padkit
