#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "padkit/error.hpp"
#include "padkit/harness.hpp"

using namespace padkit;

namespace {

struct World {
  std::vector<SampleRecord> catalog;
  ProtocolManifest manifest;
  LabelVault vault;
  LabelMap dev_test;
  std::unordered_map<std::string, std::vector<double>> features;
};

World make_world(std::uint64_t seed = 7, std::size_t per_class = 100) {
  SynthConfig cfg;
  cfg.n_bonafide = cfg.n_attack = per_class;
  cfg.seed = seed;
  auto catalog = synth_dataset(cfg);
  auto manifest = build_protocol3(catalog);
  auto vault = LabelVault::from_catalog(catalog, manifest);
  LabelMap truth;
  std::unordered_map<std::string, std::vector<double>> features;
  for (const auto& s : catalog) {
    truth[s.sample_id] = s.label;
    features[s.sample_id] = *s.feature;
  }
  return {std::move(catalog), std::move(manifest), std::move(vault), std::move(truth), std::move(features)};
}

std::string oracle_file(const World& w, Phase phase, bool inverted = false) {
  std::vector<ScoredSample> s;
  for (const auto& id : expected_ids(w.manifest, phase)) {
    const double y = w.dev_test.at(id) == Label::bonafide ? 1.0 : 0.0;
    s.push_back({id, inverted ? 1.0 - y : y});
  }
  return format_scores(s);
}

MetricReport printed(double acer_pct, double apcer_pct, double bpcer_pct, double auc_pct) {
  MetricReport r;
  r.acer = acer_pct / 100.0;
  r.apcer = apcer_pct / 100.0;
  r.bpcer = bpcer_pct / 100.0;
  r.auc = auc_pct / 100.0;
  return r;
}

}  // namespace

TEST_CASE("phase label visibility") {
  const PhaseConfig dev = PhaseConfig::development();
  CHECK(dev.can_read(Split::train));
  CHECK_FALSE(dev.can_read(Split::dev));
  CHECK_FALSE(dev.can_read(Split::test));
  CHECK_FALSE(dev.submission_budget_per_day.has_value());
  const PhaseConfig fin = PhaseConfig::final_phase();
  CHECK(fin.can_read(Split::dev));
  CHECK_FALSE(fin.can_read(Split::test));
  CHECK(fin.submission_budget_per_day == 2u);
}

TEST_CASE("label firewall") {
  const World w = make_world();
  const TeamView dev_view = w.vault.view(PhaseConfig::development());
  CHECK(dev_view.labels(Split::train).size() == w.manifest.train_ids.size());
  CHECK_THROWS_AS(dev_view.labels(Split::dev), AccessDenied);
  CHECK_THROWS_AS(dev_view.labels(Split::test), AccessDenied);
  const TeamView fin_view = w.vault.view(PhaseConfig::final_phase());
  CHECK(fin_view.labels(Split::dev).size() == w.manifest.dev_ids.size());
  CHECK_THROWS_AS(fin_view.labels(Split::test), AccessDenied);

  PhaseConfig leaky = PhaseConfig::development();
  leaky.labels_visible.insert(Split::dev);
  CHECK_THROWS_AS(ChallengeServer(w.manifest, w.vault, leaky), ConfigError);
  PhaseConfig leaky_final = PhaseConfig::final_phase();
  leaky_final.labels_visible.insert(Split::test);
  CHECK_THROWS_AS(ChallengeServer(w.manifest, w.vault, PhaseConfig::development(), leaky_final), ConfigError);
}

TEST_CASE("peeking during development is denied and recorded") {
  const World w = make_world();
  const std::vector<ScriptedTeam> teams{peeking_team("peek_dev", Split::dev), peeking_team("peek_test", Split::test),
                                        oracle_team("oracle", w.dev_test)};
  const ChallengeResult r = run_challenge(ChallengeConfig{}, w.manifest, w.vault, teams);
  for (const auto& e : r.audit) {
    if (e.team == "oracle") continue;
    const bool may_read = e.team == "peek_dev" && e.phase == Phase::final;
    CHECK(e.accepted == may_read);
    if (!may_read) CHECK(e.reason.rfind("access denied", 0) == 0);
  }
  for (const auto& row : r.development.rows) CHECK(row.team == "oracle");
  REQUIRE(r.final.rows.size() == 2);
}

TEST_CASE("well-formed submission passes validation") {
  const World w = make_world();
  const auto ids = expected_ids(w.manifest, Phase::final);
  CHECK(ids.size() == w.manifest.dev_ids.size() + w.manifest.test_ids.size());
  const ValidationReport v = validate_submission(oracle_file(w, Phase::final), ids);
  CHECK(v.ok());
  CHECK(v.scores.size() == ids.size());
}

TEST_CASE("missing id is reported by name") {
  const std::vector<std::string> ids{"a", "b", "c"};
  const ValidationReport v = validate_submission("sample_id,score\na,0.1\nc,0.9\n", ids);
  REQUIRE(v.issues.size() == 1);
  CHECK(v.issues[0].row == 0);
  CHECK(v.issues[0].message.find("'b'") != std::string::npos);
}

TEST_CASE("specific corruptions carry row numbers") {
  const std::vector<std::string> ids{"a", "b"};
  auto issues = [&](std::string_view f) { return validate_submission(f, ids).issues; };
  CHECK(issues("id,score\na,0.1\nb,0.2\n").front().row == 1);
  CHECK(issues("sample_id,score\na,0.1\na,0.2\nb,0.3\n").front() ==
        SubmissionIssue{3, "duplicate sample_id 'a' (first seen on row 2)"});
  CHECK(issues("sample_id,score\na,nan\nb,0.2\n").front().row == 2);
  CHECK(issues("sample_id,score\na,0.1,7\nb,0.2\n").front().row == 2);
  CHECK(issues("sample_id,score\na,1.5\nb,0.2\n").front().row == 2);
  CHECK(issues("sample_id,score\na,0.1\nb,0.2\nz,0.3\n").front().row == 4);
  CHECK(issues("sample_id,score\na,0.1\n\nb,0.2\n").front().row == 3);
  CHECK(issues("sample_id,score\na,abc\nb,0.2\n").front().row == 2);
  CHECK(issues("sample_id,score\n,0.3\na,0.1\nb,0.2\n").front().row == 2);
  CHECK_FALSE(issues("").empty());
  CHECK(validate_submission("sample_id,score\na,0\nb,1", ids).ok());
}

TEST_CASE("fuzzed corruptions are always rejected") {
  const World w = make_world(3, 40);
  const auto ids = expected_ids(w.manifest, Phase::development);
  std::mt19937_64 rng(99);
  for (int rep = 0; rep < 500; ++rep) {
    std::vector<std::string> lines{"sample_id,score"};
    for (const auto& id : ids) lines.push_back(id + ",0.5");
    std::uniform_int_distribution<std::size_t> row(1, lines.size() - 1);
    const std::size_t r = row(rng);
    const std::string id = lines[r].substr(0, lines[r].find(','));
    switch (rep % 9) {
      case 0: lines.insert(lines.begin() + static_cast<long>(r), lines[r]); break;
      case 1: lines[r] = id + ",NaN"; break;
      case 2: lines[r] = id + ",0.5,extra"; break;
      case 3: lines.erase(lines.begin() + static_cast<long>(r)); break;
      case 4: lines.push_back("intruder_" + std::to_string(rep) + ",0.5"); break;
      case 5: lines[r] = id + ",-0.0001"; break;
      case 6: lines[r] = id + ",inf"; break;
      case 7: lines[0] = "sample_id;score"; break;
      case 8: lines[r] = id; break;
    }
    std::string file;
    for (const auto& l : lines) file += l + "\n";
    const ValidationReport v = validate_submission(file, ids);
    CHECK_FALSE(v.ok());
    CHECK(v.scores.empty());
  }
}

TEST_CASE("oracle and anti-oracle scores") {
  const World w = make_world();
  ChallengeServer server(w.manifest, w.vault);
  for (Phase p : {Phase::development, Phase::final}) {
    Submission s{"o", p, 1, 0, oracle_file(w, p), std::nullopt};
    const AuditEntry good = server.evaluate(s);
    REQUIRE(good.report.has_value());
    CHECK(good.report->acer == 0.0);
    CHECK(good.report->auc == 1.0);
    s.score_file = oracle_file(w, p, true);
    const AuditEntry bad = server.evaluate(s);
    REQUIRE(bad.report.has_value());
    CHECK(bad.report->auc == 0.0);
  }
  CHECK(server.audit().empty());
}

TEST_CASE("random scores average to chance") {
  const World w = make_world(5, 200);
  ChallengeServer server(w.manifest, w.vault);
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<ScoredSample> s;
    for (const auto& id : expected_ids(w.manifest, Phase::final)) s.push_back({id, u(rng)});
    total += server.evaluate({"r", Phase::final, 1, 0, format_scores(s), std::nullopt}).report->acer;
  }
  CHECK(std::abs(total / 50.0 - 0.5) <= 0.05);
}

TEST_CASE("final budget keeps the earlier accepted submission") {
  const World w = make_world();
  ChallengeServer server(w.manifest, w.vault);
  const std::string good = oracle_file(w, Phase::final);
  const std::string worse = oracle_file(w, Phase::final, true);
  CHECK(server.submit({"t", Phase::final, 1, 4, worse, std::nullopt}).accepted);
  CHECK(server.submit({"t", Phase::final, 2, 4, good, std::nullopt}).accepted);
  const AuditEntry third = server.submit({"t", Phase::final, 3, 4, worse, std::nullopt});
  CHECK_FALSE(third.accepted);
  CHECK(third.reason == "budget exceeded: day 4, 2 of 2 already accepted");
  CHECK(server.accepted_on("t", Phase::final, 4) == 2);
  const Leaderboard board = server.leaderboard(Phase::final);
  REQUIRE(board.rows.size() == 1);
  CHECK(board.rows[0].sequence_number == 2);
  CHECK(board.rows[0].acer == 0.0);
  // A new day restores the budget.
  CHECK(server.submit({"t", Phase::final, 4, 5, worse, std::nullopt}).accepted);
  CHECK(server.leaderboard(Phase::final).rows[0].sequence_number == 4);
}

TEST_CASE("invalid submissions do not consume budget") {
  const World w = make_world();
  ChallengeServer server(w.manifest, w.vault);
  CHECK_FALSE(server.submit({"t", Phase::final, 1, 0, "garbage", std::nullopt}).accepted);
  CHECK(server.submit({"t", Phase::final, 2, 0, oracle_file(w, Phase::final), std::nullopt}).accepted);
  CHECK(server.submit({"t", Phase::final, 3, 0, oracle_file(w, Phase::final), std::nullopt}).accepted);
  CHECK(server.audit().size() == 3);
  CHECK(server.audit()[0].reason == "validation failed");
}

TEST_CASE("budget fuzz") {
  const World w = make_world(11, 40);
  const std::string files[] = {oracle_file(w, Phase::final), oracle_file(w, Phase::final, true), "broken"};
  std::mt19937_64 rng(5);
  ChallengeServer server(w.manifest, w.vault);
  std::map<std::string, std::size_t> last_accepted;
  std::map<std::tuple<std::string, std::size_t>, std::size_t> per_day;
  std::size_t seq = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::string team = "team" + std::to_string(rng() % 4);
    const std::size_t day = i / 40 + rng() % 2;
    const AuditEntry e = server.submit({team, Phase::final, ++seq, day, files[rng() % 3], std::nullopt});
    if (e.accepted) {
      last_accepted[team] = seq;
      ++per_day[{team, day}];
    }
  }
  for (const auto& [key, n] : per_day) CHECK(n <= 2);
  for (const auto& row : server.leaderboard(Phase::final).rows) CHECK(row.sequence_number == last_accepted.at(row.team));
}

TEST_CASE("development phase is unlimited unless configured") {
  const World w = make_world();
  ChallengeServer open(w.manifest, w.vault);
  for (std::size_t i = 1; i <= 6; ++i)
    CHECK(open.submit({"t", Phase::development, i, 0, oracle_file(w, Phase::development), std::nullopt}).accepted);
  ChallengeServer capped(w.manifest, w.vault, PhaseConfig::development(1));
  CHECK(capped.submit({"t", Phase::development, 1, 0, oracle_file(w, Phase::development), std::nullopt}).accepted);
  CHECK_FALSE(capped.submit({"t", Phase::development, 2, 0, oracle_file(w, Phase::development), std::nullopt}).accepted);
}

TEST_CASE("published results replayed through the leaderboard") {
  const World w = make_world();
  const std::vector<std::pair<std::string, MetricReport>> table{
      {"ioNetworks", printed(12.00, 15.47, 8.53, 95.13)}, {"SeaRecluse", printed(9.89, 15.92, 3.86, 96.02)},
      {"MateoH", printed(4.73, 5.07, 4.38, 98.38)},       {"OPDAI", printed(7.16, 9.18, 5.13, 97.38)},
      {"Chenyifan", printed(11.01, 14.12, 7.89, 94.39)},  {"CTEL_AI", printed(5.56, 9.20, 1.91, 98.21)},
      {"XiangR", printed(9.96, 11.35, 8.57, 95.80)},      {"horsego", printed(6.22, 8.17, 4.26, 96.97)},
      {"hexianhua", printed(7.08, 11.21, 2.94, 97.83)},
  };
  std::vector<ScriptedTeam> teams;
  for (const auto& [name, r] : table) teams.push_back(injected_team(name, r));
  ChallengeConfig cfg;
  cfg.development_days = 0;
  cfg.final_days = 1;
  const ChallengeResult r = run_challenge(cfg, w.manifest, w.vault, teams);
  std::vector<std::string> order;
  for (const auto& row : r.final.rows) order.push_back(row.team);
  CHECK(order == std::vector<std::string>{"MateoH", "CTEL_AI", "horsego", "hexianhua", "OPDAI", "SeaRecluse",
                                          "XiangR", "Chenyifan", "ioNetworks"});
  for (const auto& e : r.audit) CHECK(e.injected);

  const ReportArtifacts art = report(r.final);
  CHECK(art.table.find("MateoH") != std::string::npos);
  std::istringstream lines(art.table);
  std::string line;
  std::getline(lines, line);
  std::getline(lines, line);
  CHECK(line.find("4.73") != std::string::npos);
  CHECK(line.find("5.07") != std::string::npos);
  CHECK(line.find("4.38") != std::string::npos);
  CHECK(line.find("98.38") != std::string::npos);
  CHECK(art.table.find("12.00") != std::string::npos);
}

TEST_CASE("published fixture matches its source table") {
  const auto rows = published_final_results();
  REQUIRE(rows.size() == 9);
  CHECK(rows[0].team == "MateoH");
  CHECK(format_percent(rows[0].report.acer) == "4.73");
  CHECK(format_percent(rows[1].report.apcer) == "9.20");
  CHECK(format_percent(rows[8].report.acer) == "12.00");
  CHECK(format_percent(rows[7].report.auc) == "94.39");
}

TEST_CASE("challenge runs are deterministic") {
  const World w = make_world(21, 80);
  auto teams = [&] {
    return std::vector<ScriptedTeam>{
        oracle_team("oracle", w.dev_test), noisy_team("noisy", w.dev_test, 0.4), random_team("random", 3),
        anti_oracle_team("anti", w.dev_test),
        feature_team("mean", [](std::span<const double> x) {
          double s = 0.0;
          for (double v : x) s += v;
          return 1.0 / (1.0 + std::exp(-s / static_cast<double>(x.size())));
        })};
  };
  ChallengeConfig cfg;
  cfg.development_days = 3;
  cfg.final_days = 3;
  cfg.seed = 42;
  const auto a = run_challenge(cfg, w.manifest, w.vault, teams(), &w.features);
  const auto b = run_challenge(cfg, w.manifest, w.vault, teams(), &w.features);
  CHECK(leaderboard_to_json(a.final).dump() == leaderboard_to_json(b.final).dump());
  CHECK(leaderboard_to_json(a.development).dump() == leaderboard_to_json(b.development).dump());
  std::ostringstream la, lb;
  write_audit_log(la, a.audit);
  write_audit_log(lb, b.audit);
  CHECK(la.str() == lb.str());
  REQUIRE(a.final.rows.size() == 5);
  CHECK(a.final.rows.front().acer == 0.0);
  const auto oracle_row = std::find_if(a.final.rows.begin(), a.final.rows.end(), [](const LeaderboardRow& r) { return r.team == "oracle"; });
  REQUIRE(oracle_row != a.final.rows.end());
  CHECK(oracle_row->acer == 0.0);
  CHECK(oracle_row->auc == 1.0);
  CHECK(a.final.rows.back().team == "anti");
  std::size_t random_rejected = 0;
  for (const auto& e : a.audit) random_rejected += e.team == "random" && e.phase == Phase::final && !e.accepted;
  CHECK(random_rejected == 3);
  cfg.seed = 43;
  const auto c = run_challenge(cfg, w.manifest, w.vault, teams(), &w.features);
  CHECK(leaderboard_to_json(c.final).dump() != leaderboard_to_json(a.final).dump());

  std::vector<ScriptedTeam> dup{random_team("x"), random_team("x")};
  CHECK_THROWS_AS(run_challenge(cfg, w.manifest, w.vault, dup), ConfigError);
}

TEST_CASE("report artifacts") {
  const Leaderboard empty{Phase::final, {}};
  const ReportArtifacts e = report(empty);
  CHECK(e.json.is_array());
  CHECK(e.json.empty());
  CHECK(e.csv == "rank,team,acer,apcer,bpcer,auc,sequence_number\n");
  CHECK(leaderboard_from_csv(e.csv).rows.empty());
  CHECK(e.table.find("Rank") != std::string::npos);

  Leaderboard board{Phase::final,
                    {{1, "a", 1.0 / 3.0, 0.1, 0.5666666666666667, 0.987654321, 4},
                     {2, "b", 0.5, 0.25, 0.75, 0.5, 1}}};
  const ReportArtifacts r = report(board);
  const Leaderboard from_csv = leaderboard_from_csv(r.csv);
  CHECK(from_csv == board);
  CHECK(leaderboard_to_json(from_csv) == r.json);
  CHECK(leaderboard_from_json(r.json) == board);
  CHECK_THROWS_AS(leaderboard_from_json(nlohmann::json::object()), ValidationError);
  CHECK_THROWS_AS(leaderboard_from_csv("rank,team\n"), ParseError);
}

TEST_CASE("percent formatting rounds half up") {
  CHECK(format_percent(0.04725) == "4.73");
  CHECK(format_percent(0.05555) == "5.56");
  CHECK(format_percent(0.0) == "0.00");
  CHECK(format_percent(1.0) == "100.00");
}
