// padkit: protocol construction, training, scoring and challenge simulation.
//
// Exit codes: 0 ok, 2 validation failure, 3 config error, 1 anything else.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "padkit/dataset.hpp"
#include "padkit/error.hpp"
#include "padkit/harness.hpp"
#include "padkit/image.hpp"
#include "padkit/metrics.hpp"
#include "padkit/model.hpp"
#include "padkit/preprocess.hpp"
#include "padkit/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace padkit;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitConfig = 3;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json read_json(const std::string& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

json config_or_empty(const Globals& g) { return g.config.empty() ? json::object() : read_json(g.config); }

fs::path out_dir(const Globals& g) {
  fs::path dir(g.out);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

std::vector<SampleRecord> load_catalog(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open catalog '" + path + "'");
  return read_catalog(in);
}

ProtocolManifest load_manifest(const std::string& path) {
  try {
    return read_json(path).get<ProtocolManifest>();
  } catch (const json::exception& e) {
    throw ValidationError("malformed manifest: " + std::string(e.what()));
  }
}

std::vector<SampleRecord> select(const std::vector<SampleRecord>& catalog,
                                 const std::vector<std::string>& ids) {
  std::unordered_map<std::string, const SampleRecord*> by_id;
  for (const auto& s : catalog) by_id.emplace(s.sample_id, &s);
  std::vector<SampleRecord> out;
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ValidationError("manifest id '" + id + "' not in catalog");
    out.push_back(*it->second);
  }
  return out;
}

LabelMap labels_of(const std::vector<SampleRecord>& samples) {
  LabelMap out;
  for (const auto& s : samples) out.emplace(s.sample_id, s.label);
  return out;
}

int cmd_synth(const Globals& g) {
  SynthConfig cfg;
  try {
    cfg = config_or_empty(g).get<SynthConfig>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed synth config: ") + e.what());
  }
  if (g.seed) cfg.seed = *g.seed;
  const auto samples = synth_dataset(cfg);
  std::ostringstream out;
  write_catalog(out, samples);
  write_text(out_dir(g) / "catalog.jsonl", out.str());
  std::cout << "wrote " << samples.size() << " samples\n";
  return 0;
}

int cmd_protocol_build(const Globals& g, const std::string& catalog_path) {
  const auto catalog = load_catalog(catalog_path);
  const ProtocolManifest manifest = build_protocol3(catalog);
  const fs::path dir = out_dir(g);
  write_text(dir / "manifest.json", json(manifest).dump(2) + "\n");
  for (Split s : {Split::train, Split::dev, Split::test}) {
    std::ostringstream labels;
    write_labels_csv(labels, labels_of(select(catalog, manifest.ids(s))));
    write_text(dir / ("labels_" + std::string(to_string(s)) + ".csv"), labels.str());
  }
  std::cout << "train " << manifest.train_ids.size() << ", dev " << manifest.dev_ids.size()
            << ", test " << manifest.test_ids.size() << "\n";
  return 0;
}

int cmd_train(const Globals& g, const std::string& catalog_path, const std::string& manifest_path,
              bool two_stage) {
  TrainConfig cfg = config_or_empty(g).get<TrainConfig>();
  if (g.seed) cfg.seed = *g.seed;
  cfg.validate();
  const auto catalog = load_catalog(catalog_path);
  const TrainData data = TrainData::from_protocol(catalog, load_manifest(manifest_path));
  const fs::path dir = out_dir(g);
  std::ostringstream history;
  std::optional<TinyModel> model;
  if (two_stage) {
    TwoStageResult r = two_stage_train(cfg, data);
    write_history(history, r.stage1);
    write_history(history, r.stage2);
    std::cout << "threshold " << (r.threshold_met ? "met" : "not met") << " after "
              << r.stage2.size() << " stage-2 epochs\n";
    model = std::move(r.model);
  } else {
    TrainResult r = train(cfg, data);
    write_history(history, r.history);
    const auto& last = r.history.back();
    std::cout << "epochs " << r.history.size() << ", loss " << last.loss << ", dev auc "
              << last.dev_auc << "\n";
    model = std::move(r.model);
  }
  write_text(dir / "history.jsonl", history.str());
  write_text(dir / "model.json", json(*model).dump() + "\n");
  return 0;
}

int cmd_predict(const Globals& g, const std::string& model_path, const std::string& catalog_path,
                const std::string& manifest_path, const std::string& phase_name, bool tta) {
  TinyModel model = TinyModel::zeros(LossRecipe::plain, 1, 0);
  try {
    from_json(read_json(model_path), model);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed model: ") + e.what());
  }
  const auto catalog = load_catalog(catalog_path);
  const auto ids = expected_ids(load_manifest(manifest_path), phase_from_string(phase_name));
  const auto scores = score_samples(model, select(catalog, ids), tta);
  write_text(out_dir(g) / "scores.csv", format_scores(scores));
  std::cout << "scored " << scores.size() << " samples\n";
  return 0;
}

int cmd_score(const Globals& g, const std::string& scores_path, const std::string& catalog_path,
              const std::string& manifest_path, const std::string& phase_name) {
  const Phase phase = phase_from_string(phase_name);
  const auto catalog = load_catalog(catalog_path);
  const ProtocolManifest manifest = load_manifest(manifest_path);
  const ValidationReport v = validate_submission(read_text(scores_path), expected_ids(manifest, phase));
  if (!v.ok()) {
    std::cerr << "submission rejected:\n" << v.summary();
    return kExitValidation;
  }
  const MetricReport r = score_submission(v.scores, phase, LabelVault::from_catalog(catalog, manifest));
  const std::string text = json(r).dump(2) + "\n";
  if (!g.out.empty() && g.out != ".") write_text(out_dir(g) / "report.json", text);
  std::cout << text;
  return 0;
}

ScriptedTeam team_from_json(const json& t, const LabelMap& truth) {
  const std::string name = t.at("name").get<std::string>();
  const std::string kind = t.at("kind").get<std::string>();
  ScriptedTeam team;
  if (kind == "oracle") {
    team = oracle_team(name, truth);
  } else if (kind == "anti_oracle") {
    team = anti_oracle_team(name, truth);
  } else if (kind == "random") {
    team = random_team(name);
  } else if (kind == "noisy") {
    team = noisy_team(name, truth, t.value("noise", 0.3));
  } else if (kind == "injected") {
    team = injected_team(name, t.at("report").get<MetricReport>());
  } else if (kind == "peek") {
    const std::string split = t.value("split", std::string("test"));
    team = peeking_team(name, split == "train" ? Split::train : split == "dev" ? Split::dev : Split::test);
  } else if (kind == "mean_feature") {
    team = feature_team(name, [](std::span<const double> x) {
      double s = 0.0;
      for (double v : x) s += v;
      return sigmoid(s / static_cast<double>(x.size()));
    });
  } else {
    throw ConfigError("unknown team kind '" + kind + "'");
  }
  team.attempts_per_day = t.value("attempts_per_day", std::size_t{1});
  return team;
}

int cmd_challenge_run(const Globals& g, const std::string& catalog_path,
                      const std::string& manifest_path) {
  const json cfg = config_or_empty(g);
  ChallengeConfig cc;
  std::vector<ScriptedTeam> teams;
  const auto catalog = load_catalog(catalog_path);
  const ProtocolManifest manifest = load_manifest(manifest_path);
  const LabelMap truth = labels_of(catalog);
  try {
    cc.development_days = cfg.value("development_days", cc.development_days);
    cc.final_days = cfg.value("final_days", cc.final_days);
    cc.seed = g.seed ? *g.seed : cfg.value("seed", cc.seed);
    if (cfg.contains("development_budget") && !cfg["development_budget"].is_null()) {
      cc.development = PhaseConfig::development(cfg["development_budget"].get<std::size_t>());
    }
    cc.final = PhaseConfig::final_phase(cfg.value("final_budget", std::size_t{2}));
    if (!cfg.contains("teams") || cfg["teams"].empty()) throw ConfigError("challenge config lists no teams");
    for (const auto& t : cfg["teams"]) teams.push_back(team_from_json(t, truth));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed challenge config: ") + e.what());
  }
  std::unordered_map<std::string, std::vector<double>> features;
  for (const auto& s : catalog) {
    if (s.feature) features.emplace(s.sample_id, *s.feature);
  }
  const ChallengeResult r = run_challenge(cc, manifest, LabelVault::from_catalog(catalog, manifest),
                                          teams, &features);
  const fs::path dir = out_dir(g);
  write_text(dir / "leaderboard_development.json", leaderboard_to_json(r.development).dump(2) + "\n");
  write_text(dir / "leaderboard_final.json", leaderboard_to_json(r.final).dump(2) + "\n");
  std::ostringstream audit;
  write_audit_log(audit, r.audit);
  write_text(dir / "audit.jsonl", audit.str());
  std::cout << report(r.final).table;
  return 0;
}

int cmd_report(const Globals& g, const std::string& leaderboard_path, bool published) {
  Leaderboard board;
  if (published) {
    std::map<std::string, std::pair<MetricReport, std::size_t>> latest;
    for (const auto& e : published_final_results()) latest[e.team] = {e.report, 0};
    board = make_leaderboard(Phase::final, latest);
  } else {
    if (leaderboard_path.empty()) throw ConfigError("report needs --leaderboard or --published");
    board = leaderboard_from_json(read_json(leaderboard_path));
  }
  const ReportArtifacts a = report(board);
  const fs::path dir = out_dir(g);
  write_text(dir / "table.txt", a.table);
  write_text(dir / "leaderboard.json", a.json.dump(2) + "\n");
  write_text(dir / "leaderboard.csv", a.csv);
  std::cout << a.table;
  return 0;
}

int cmd_bandpass(const std::string& in, const std::string& out, double sigma_low, double sigma_high) {
  save_png(out, band_pass_image(load_png(in), sigma_low, sigma_high));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Presentation-attack detection protocol, training and challenge toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON config file");
  app.add_option("--seed", g.seed, "Override the config seed");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();

  std::string catalog, manifest, model, scores, phase = "final", leaderboard, image_in, image_out;
  bool two_stage = false, tta = false, published = false;
  double sigma_low = 40.0, sigma_high = 10.0;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic quality-banded catalog");
  auto* protocol = app.add_subcommand("protocol", "Protocol tools");
  protocol->require_subcommand(1);
  auto* build = protocol->add_subcommand("build", "Split a catalog into quality bands");
  build->add_option("--catalog", catalog)->required();

  auto* train_cmd = app.add_subcommand("train", "Train a model from a config");
  train_cmd->add_option("--catalog", catalog)->required();
  train_cmd->add_option("--manifest", manifest)->required();
  train_cmd->add_flag("--two-stage", two_stage, "Frozen-extractor warmup, then full fine-tuning");

  auto* predict_cmd = app.add_subcommand("predict", "Score the ids a phase requires");
  predict_cmd->add_option("--model", model)->required();
  predict_cmd->add_option("--catalog", catalog)->required();
  predict_cmd->add_option("--manifest", manifest)->required();
  predict_cmd->add_option("--phase", phase)->check(CLI::IsMember({"development", "final"}));
  predict_cmd->add_flag("--tta", tta);

  auto* score_cmd = app.add_subcommand("score", "Validate and score a submission");
  score_cmd->add_option("--scores", scores)->required();
  score_cmd->add_option("--catalog", catalog)->required();
  score_cmd->add_option("--manifest", manifest)->required();
  score_cmd->add_option("--phase", phase)->check(CLI::IsMember({"development", "final"}));

  auto* challenge = app.add_subcommand("challenge", "Challenge simulation");
  challenge->require_subcommand(1);
  auto* run = challenge->add_subcommand("run", "Run both phases with scripted teams");
  run->add_option("--catalog", catalog)->required();
  run->add_option("--manifest", manifest)->required();

  auto* report_cmd = app.add_subcommand("report", "Render a leaderboard as table, JSON and CSV");
  report_cmd->add_option("--leaderboard", leaderboard);
  report_cmd->add_flag("--published", published, "Render the published final results");

  auto* bandpass = app.add_subcommand("bandpass", "Band-pass filter a PNG");
  bandpass->add_option("--in", image_in)->required();
  bandpass->add_option("--image-out", image_out)->required();
  bandpass->add_option("--sigma-low", sigma_low)->capture_default_str();
  bandpass->add_option("--sigma-high", sigma_high)->capture_default_str();

  for (auto* sub : {synth, protocol, build, train_cmd, predict_cmd, score_cmd, challenge, run,
                    report_cmd, bandpass}) {
    sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*synth) return cmd_synth(g);
    if (*build) return cmd_protocol_build(g, catalog);
    if (*train_cmd) return cmd_train(g, catalog, manifest, two_stage);
    if (*predict_cmd) return cmd_predict(g, model, catalog, manifest, phase, tta);
    if (*score_cmd) return cmd_score(g, scores, catalog, manifest, phase);
    if (*run) return cmd_challenge_run(g, catalog, manifest);
    if (*report_cmd) return cmd_report(g, leaderboard, published);
    if (*bandpass) return cmd_bandpass(image_in, image_out, sigma_low, sigma_high);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ParameterError& e) {
    std::cerr << "parameter error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
