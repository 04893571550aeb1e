#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>
#include <sstream>

#include "padkit/dataset.hpp"
#include "padkit/error.hpp"
#include "padkit/metrics.hpp"

using namespace padkit;

namespace {

SampleRecord sample(std::string id, double quality, Label label = Label::bonafide) {
  SampleRecord s;
  s.sample_id = std::move(id);
  s.quality_score = quality;
  s.label = label;
  s.attack_category = label == Label::bonafide ? AttackCategory::none : AttackCategory::mask_resin;
  return s;
}

std::string random_field(std::mt19937_64& rng) {
  static const std::string alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-.";
  std::uniform_int_distribution<std::size_t> len(1, 8), pick(0, alphabet.size() - 1);
  std::string s;
  for (std::size_t i = len(rng); i > 0; --i) s += alphabet[pick(rng)];
  return s;
}

}  // namespace

TEST_CASE("track name fields are positional") {
  const FolderMeta m = parse_track_name("G1_S03_C2_E1_T5");
  CHECK(m.group == "G1");
  CHECK(m.scene == "S03");
  CHECK(m.camera == "C2");
  CHECK(m.epoch == "E1");
  CHECK(m.time == "T5");
}

TEST_CASE("track name round trip on generated names") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 1000; ++i) {
    std::string name;
    for (int f = 0; f < 5; ++f) name += (f ? "_" : "") + random_field(rng);
    CHECK(format_track_name(parse_track_name(name)) == name);
  }
}

TEST_CASE("malformed track names") {
  CHECK_THROWS_AS(parse_track_name("G1_S03_C2"), ParseError);
  CHECK_THROWS_AS(parse_track_name("G1_S03_C2_E1_T5_X"), ParseError);
  CHECK_THROWS_AS(parse_track_name("G1__C2_E1_T5"), ParseError);
  try {
    parse_track_name("G1_S03__E1_T5");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("camera") != std::string::npos);
  }
}

TEST_CASE("record invariants") {
  SampleRecord s = sample("a", 0.5);
  CHECK_NOTHROW(s.validate());
  s.quality_score = 1.2;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = sample("b", 0.5, Label::attack);
  s.attack_category = AttackCategory::none;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = sample("c", 0.5);
  s.attack_category = AttackCategory::flat_2d;
  CHECK_THROWS_AS(s.validate(), ValidationError);
}

TEST_CASE("protocol band boundaries") {
  const std::vector<SampleRecord> samples{sample("a", 0.40), sample("b", 0.30), sample("c", 0.2999),
                                          sample("d", 1.0), sample("e", 0.0), sample("f", 0.3999)};
  const ProtocolManifest m = build_protocol3(samples);
  CHECK(m.train_ids == std::vector<std::string>{"a", "d"});
  CHECK(m.dev_ids == std::vector<std::string>{"b", "f"});
  CHECK(m.test_ids == std::vector<std::string>{"c", "e"});
}

TEST_CASE("all top quality leaves dev and test empty") {
  std::vector<SampleRecord> samples;
  for (int i = 0; i < 5; ++i) samples.push_back(sample("s" + std::to_string(i), 1.0));
  const ProtocolManifest m = build_protocol3(samples);
  CHECK(m.train_ids.size() == 5);
  CHECK(m.dev_ids.empty());
  CHECK(m.test_ids.empty());
}

TEST_CASE("protocol rejects out of range quality") {
  CHECK_THROWS_AS(build_protocol3(std::vector<SampleRecord>{sample("a", -0.01)}), ValidationError);
}

TEST_CASE("protocol membership matches a direct interval check") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<SampleRecord> samples;
  std::vector<std::string> train, dev, test;
  for (int i = 0; i < 10000; ++i) {
    const double q = i % 100 == 0 ? 0.3 + 0.1 * (i % 200 == 0) : u(rng);
    const std::string id = "s" + std::to_string(i);
    samples.push_back(sample(id, q));
    if (q >= 0.4 && q <= 1.0) train.push_back(id);
    else if (q >= 0.3 && q < 0.4) dev.push_back(id);
    else test.push_back(id);
  }
  const ProtocolManifest m = build_protocol3(samples);
  CHECK(m.train_ids == train);
  CHECK(m.dev_ids == dev);
  CHECK(m.test_ids == test);
  std::set<std::string> all;
  for (const auto* ids : {&m.train_ids, &m.dev_ids, &m.test_ids}) all.insert(ids->begin(), ids->end());
  CHECK(all.size() == samples.size());
}

TEST_CASE("max upsample balances by resampling the minority") {
  std::vector<LabeledId> ids;
  for (int i = 0; i < 10; ++i) ids.push_back({"b" + std::to_string(i), Label::bonafide});
  for (int i = 0; i < 4; ++i) ids.push_back({"a" + std::to_string(i), Label::attack});
  const auto out = max_upsample(ids, 5);
  REQUIRE(out.size() == 20);
  CHECK(std::equal(ids.begin(), ids.end(), out.begin()));
  std::size_t attacks = 0;
  for (const auto& x : out) attacks += x.label == Label::attack;
  CHECK(attacks == 10);
  for (std::size_t i = ids.size(); i < out.size(); ++i) {
    CHECK(out[i].label == Label::attack);
    CHECK(out[i].id.front() == 'a');
  }
  CHECK(max_upsample(ids, 5) == out);
}

TEST_CASE("max upsample of a balanced list is a copy") {
  const std::vector<LabeledId> ids{{"x", Label::bonafide}, {"y", Label::attack}, {"z", Label::attack},
                                   {"w", Label::bonafide}};
  CHECK(max_upsample(ids, 9) == ids);
  CHECK_THROWS_AS(max_upsample(std::vector<LabeledId>{{"x", Label::bonafide}}, 1), ValidationError);
}

TEST_CASE("synthetic dataset bookkeeping and determinism") {
  SynthConfig cfg;
  const auto a = synth_dataset(cfg);
  REQUIRE(a.size() == 200);
  std::size_t bona = 0;
  for (const auto& s : a) {
    bona += s.label == Label::bonafide;
    REQUIRE(s.feature.has_value());
    CHECK(s.feature->size() == cfg.dim);
    CHECK_NOTHROW(s.validate());
  }
  CHECK(bona == 100);
  const ProtocolManifest m = build_protocol3(a);
  CHECK_FALSE(m.train_ids.empty());
  CHECK_FALSE(m.dev_ids.empty());
  CHECK_FALSE(m.test_ids.empty());

  std::ostringstream x, y;
  write_catalog(x, a);
  write_catalog(y, synth_dataset(cfg));
  CHECK(x.str() == y.str());
  std::istringstream in(x.str());
  std::ostringstream z;
  write_catalog(z, read_catalog(in));
  CHECK(z.str() == x.str());
}

TEST_CASE("synthetic dataset rejects degenerate covariance") {
  SynthConfig cfg;
  cfg.dim = 2;
  cfg.bonafide_cov = {1.0, 1.0, 1.0, 1.0};
  CHECK_THROWS_AS(synth_dataset(cfg), ParameterError);
  cfg.bonafide_cov.clear();
  cfg.n_attack = 0;
  CHECK_THROWS_AS(synth_dataset(cfg), ParameterError);
}

TEST_CASE("zero separation gives chance-level separability") {
  // A mean-difference discriminant fitted on one half, scored on the other.
  double total = 0.0;
  const int runs = 20;
  for (int r = 0; r < runs; ++r) {
    SynthConfig cfg;
    cfg.separation = 0.0;
    cfg.n_bonafide = cfg.n_attack = 200;
    cfg.seed = 100 + r;
    const auto data = synth_dataset(cfg);
    std::vector<double> diff(cfg.dim, 0.0);
    for (std::size_t i = 0; i < data.size(); i += 2) {
      const double sign = data[i].label == Label::bonafide ? 1.0 : -1.0;
      for (std::size_t d = 0; d < cfg.dim; ++d) diff[d] += sign * (*data[i].feature)[d];
    }
    std::vector<double> scores;
    std::vector<Label> labels;
    for (std::size_t i = 1; i < data.size(); i += 2) {
      double s = 0.0;
      for (std::size_t d = 0; d < cfg.dim; ++d) s += diff[d] * (*data[i].feature)[d];
      scores.push_back(s);
      labels.push_back(data[i].label);
    }
    total += auc(scores, labels);
  }
  CHECK(std::abs(total / runs - 0.5) <= 0.05);
}

TEST_CASE("manifest json round trip") {
  const auto data = synth_dataset(SynthConfig{});
  const ProtocolManifest m = build_protocol3(data);
  nlohmann::json j = m;
  CHECK(j.get<ProtocolManifest>() == m);
}
