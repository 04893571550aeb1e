#include "padkit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <random>

#include "padkit/error.hpp"

namespace padkit {

namespace {

constexpr std::array<std::string_view, 5> kTrackFields{"group", "scene", "camera", "epoch",
                                                       "time"};

constexpr std::array<std::string_view, 7> kCategoryNames{
    "none", "mask_resin", "mask_silicone", "mask_plaster", "mask_headgear", "flat_2d",
    "adversarial"};

// Lower-triangular L with L L^T = a, row-major. Throws on non-PD input.
std::vector<double> cholesky(const std::vector<double>& a, std::size_t n) {
  std::vector<double> l(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double sum = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) sum -= l[i * n + k] * l[j * n + k];
      if (i == j) {
        if (!(sum > 1e-12)) throw ParameterError("covariance is not positive definite");
        l[i * n + i] = std::sqrt(sum);
      } else {
        l[i * n + j] = sum / l[j * n + j];
      }
    }
  }
  return l;
}

std::vector<double> resolve_cov(const std::vector<double>& cov, std::size_t dim,
                                const char* which) {
  if (cov.empty()) {
    std::vector<double> eye(dim * dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) eye[i * dim + i] = 1.0;
    return eye;
  }
  if (cov.size() != dim * dim) {
    throw ParameterError(std::string(which) + " covariance must be dim x dim");
  }
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (std::abs(cov[i * dim + j] - cov[j * dim + i]) > 1e-12) {
        throw ParameterError(std::string(which) + " covariance is not symmetric");
      }
    }
  }
  return cov;
}

std::vector<double> resolve_mean(const std::vector<double>& mean, std::size_t dim, double offset,
                                 const char* which) {
  if (mean.empty()) {
    return std::vector<double>(dim, offset / std::sqrt(static_cast<double>(dim)));
  }
  if (mean.size() != dim) throw ParameterError(std::string(which) + " mean must have dim entries");
  return mean;
}

}  // namespace

std::string_view to_string(Label label) {
  return label == Label::bonafide ? "bonafide" : "attack";
}

std::string_view to_string(AttackCategory category) {
  return kCategoryNames[static_cast<std::size_t>(category)];
}

Label label_from_string(std::string_view text) {
  if (text == "bonafide") return Label::bonafide;
  if (text == "attack") return Label::attack;
  throw ParseError("unknown label '" + std::string(text) + "'");
}

AttackCategory attack_category_from_string(std::string_view text) {
  for (std::size_t i = 0; i < kCategoryNames.size(); ++i) {
    if (kCategoryNames[i] == text) return static_cast<AttackCategory>(i);
  }
  throw ParseError("unknown attack category '" + std::string(text) + "'");
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "?";
}

FolderMeta parse_track_name(std::string_view name) {
  std::array<std::string, 5> fields;
  std::size_t count = 0;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = name.find('_', start);
    const std::string_view piece =
        name.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    if (count < fields.size()) fields[count] = std::string(piece);
    ++count;
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  if (count != fields.size()) {
    const std::string_view culprit = count < fields.size() ? kTrackFields[count] : "time";
    throw ParseError("track name '" + std::string(name) + "' has " + std::to_string(count) +
                     " fields, expected 5 (problem at field '" + std::string(culprit) + "')");
  }
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (fields[i].empty()) {
      throw ParseError("track name '" + std::string(name) + "' has an empty '" +
                       std::string(kTrackFields[i]) + "' field");
    }
  }
  return {fields[0], fields[1], fields[2], fields[3], fields[4]};
}

std::string format_track_name(const FolderMeta& meta) {
  return meta.group + '_' + meta.scene + '_' + meta.camera + '_' + meta.epoch + '_' + meta.time;
}

void SampleRecord::validate() const {
  if (!(quality_score >= 0.0 && quality_score <= 1.0)) {
    throw ValidationError("sample '" + sample_id + "' has quality score outside [0,1]");
  }
  const bool is_none = attack_category == AttackCategory::none;
  if (is_none != (label == Label::bonafide)) {
    throw ValidationError("sample '" + sample_id + "': attack category '" +
                          std::string(to_string(attack_category)) + "' contradicts label '" +
                          std::string(to_string(label)) + "'");
  }
}

const QualityBand& QualityBands::operator[](Split split) const {
  switch (split) {
    case Split::train: return train;
    case Split::dev: return dev;
    case Split::test: break;
  }
  return test;
}

const std::vector<std::string>& ProtocolManifest::ids(Split split) const {
  switch (split) {
    case Split::train: return train_ids;
    case Split::dev: return dev_ids;
    case Split::test: break;
  }
  return test_ids;
}

ProtocolManifest build_protocol3(std::span<const SampleRecord> samples) {
  ProtocolManifest manifest;
  for (const auto& s : samples) {
    if (!(s.quality_score >= 0.0 && s.quality_score <= 1.0)) {
      throw ValidationError("sample '" + s.sample_id + "' has quality score outside [0,1]");
    }
    if (manifest.bands.train.contains(s.quality_score)) {
      manifest.train_ids.push_back(s.sample_id);
    } else if (manifest.bands.dev.contains(s.quality_score)) {
      manifest.dev_ids.push_back(s.sample_id);
    } else {
      manifest.test_ids.push_back(s.sample_id);
    }
  }
  return manifest;
}

std::vector<LabeledId> max_upsample(std::span<const LabeledId> ids, std::uint64_t seed) {
  std::vector<std::size_t> bonafide, attack;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    (ids[i].label == Label::bonafide ? bonafide : attack).push_back(i);
  }
  if (bonafide.empty() || attack.empty()) {
    throw ValidationError("max_upsample needs at least one sample of each class");
  }
  std::vector<LabeledId> out(ids.begin(), ids.end());
  const auto& minority = bonafide.size() < attack.size() ? bonafide : attack;
  const std::size_t deficit =
      std::max(bonafide.size(), attack.size()) - std::min(bonafide.size(), attack.size());
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, minority.size() - 1);
  for (std::size_t k = 0; k < deficit; ++k) out.push_back(ids[minority[pick(rng)]]);
  return out;
}

std::vector<SampleRecord> synth_dataset(const SynthConfig& config) {
  if (config.dim == 0) throw ParameterError("feature dimension must be positive");
  if (config.n_bonafide == 0 || config.n_attack == 0) {
    throw ParameterError("class counts must be at least 1");
  }
  const std::size_t dim = config.dim;
  const auto mean_b = resolve_mean(config.bonafide_mean, dim, 0.5 * config.separation, "bonafide");
  const auto mean_a = resolve_mean(config.attack_mean, dim, -0.5 * config.separation, "attack");
  const auto chol_b = cholesky(resolve_cov(config.bonafide_cov, dim, "bonafide"), dim);
  const auto chol_a = cholesky(resolve_cov(config.attack_cov, dim, "attack"), dim);
  for (double w : config.band_weights) {
    if (!(w >= 0.0)) throw ParameterError("band weights must be nonnegative");
  }

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::discrete_distribution<int> band_pick(config.band_weights.begin(),
                                            config.band_weights.end());
  // Attack mix: four mask materials share the mask mass; 2D and adversarial
  // instruments share the rest.
  std::discrete_distribution<int> category_pick({0.0, 8974.5, 8974.5, 8974.5, 8974.5, 58300.0,
                                                 589.0});
  std::uniform_int_distribution<int> group(1, 4), scene(1, 40), camera(1, 7), epoch(1, 3),
      time(1, 2);

  const QualityBands bands;
  constexpr std::array<Split, 3> kSplits{Split::train, Split::dev, Split::test};

  std::vector<SampleRecord> out;
  out.reserve(config.n_bonafide + config.n_attack);
  const std::size_t total = config.n_bonafide + config.n_attack;
  for (std::size_t i = 0; i < total; ++i) {
    SampleRecord rec;
    rec.label = i < config.n_bonafide ? Label::bonafide : Label::attack;
    rec.attack_category = rec.label == Label::bonafide
                              ? AttackCategory::none
                              : static_cast<AttackCategory>(category_pick(rng));

    const QualityBand& band = bands[kSplits[static_cast<std::size_t>(band_pick(rng))]];
    std::uniform_real_distribution<double> in_band(band.lower, band.upper);
    do {
      rec.quality_score = in_band(rng);
    } while (!band.contains(rec.quality_score));

    char buf[64];
    std::snprintf(buf, sizeof buf, "S%02d", scene(rng));
    rec.meta = {"G" + std::to_string(group(rng)), buf, "C" + std::to_string(camera(rng)),
                "E" + std::to_string(epoch(rng)), "T" + std::to_string(time(rng))};
    std::snprintf(buf, sizeof buf, "/%07zu", 10 * i);
    rec.sample_id = format_track_name(rec.meta) + buf;

    const auto& mean = rec.label == Label::bonafide ? mean_b : mean_a;
    const auto& chol = rec.label == Label::bonafide ? chol_b : chol_a;
    std::vector<double> z(dim);
    for (auto& v : z) v = normal(rng);
    std::vector<double> x(mean);
    for (std::size_t r = 0; r < dim; ++r) {
      for (std::size_t c = 0; c <= r; ++c) x[r] += chol[r * dim + c] * z[c];
    }
    rec.feature = std::move(x);
    out.push_back(std::move(rec));
  }
  return out;
}

void to_json(nlohmann::json& j, const FolderMeta& meta) {
  j = {{"group", meta.group},
       {"scene", meta.scene},
       {"camera", meta.camera},
       {"epoch", meta.epoch},
       {"time", meta.time}};
}

void from_json(const nlohmann::json& j, FolderMeta& meta) {
  j.at("group").get_to(meta.group);
  j.at("scene").get_to(meta.scene);
  j.at("camera").get_to(meta.camera);
  j.at("epoch").get_to(meta.epoch);
  j.at("time").get_to(meta.time);
}

void to_json(nlohmann::json& j, const SampleRecord& record) {
  j = {{"sample_id", record.sample_id},
       {"label", to_string(record.label)},
       {"attack_category", to_string(record.attack_category)},
       {"quality_score", record.quality_score},
       {"meta", record.meta}};
  if (record.feature) j["feature"] = *record.feature;
}

void from_json(const nlohmann::json& j, SampleRecord& record) {
  j.at("sample_id").get_to(record.sample_id);
  record.label = label_from_string(j.at("label").get<std::string>());
  record.attack_category = attack_category_from_string(j.at("attack_category").get<std::string>());
  j.at("quality_score").get_to(record.quality_score);
  j.at("meta").get_to(record.meta);
  if (j.contains("feature")) {
    record.feature = j.at("feature").get<std::vector<double>>();
  } else {
    record.feature.reset();
  }
}

void to_json(nlohmann::json& j, const QualityBand& band) {
  j = {{"lower", band.lower}, {"upper", band.upper}, {"upper_closed", band.upper_closed}};
}

void from_json(const nlohmann::json& j, QualityBand& band) {
  j.at("lower").get_to(band.lower);
  j.at("upper").get_to(band.upper);
  j.at("upper_closed").get_to(band.upper_closed);
}

void to_json(nlohmann::json& j, const ProtocolManifest& manifest) {
  j = {{"train_ids", manifest.train_ids},
       {"dev_ids", manifest.dev_ids},
       {"test_ids", manifest.test_ids},
       {"bands",
        {{"train", manifest.bands.train},
         {"dev", manifest.bands.dev},
         {"test", manifest.bands.test}}}};
}

void from_json(const nlohmann::json& j, ProtocolManifest& manifest) {
  j.at("train_ids").get_to(manifest.train_ids);
  j.at("dev_ids").get_to(manifest.dev_ids);
  j.at("test_ids").get_to(manifest.test_ids);
  const auto& bands = j.at("bands");
  bands.at("train").get_to(manifest.bands.train);
  bands.at("dev").get_to(manifest.bands.dev);
  bands.at("test").get_to(manifest.bands.test);
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = {{"dim", c.dim},
       {"n_bonafide", c.n_bonafide},
       {"n_attack", c.n_attack},
       {"separation", c.separation},
       {"bonafide_mean", c.bonafide_mean},
       {"attack_mean", c.attack_mean},
       {"bonafide_cov", c.bonafide_cov},
       {"attack_cov", c.attack_cov},
       {"band_weights", c.band_weights},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
  const SynthConfig d;
  c.dim = j.value("dim", d.dim);
  c.n_bonafide = j.value("n_bonafide", d.n_bonafide);
  c.n_attack = j.value("n_attack", d.n_attack);
  c.separation = j.value("separation", d.separation);
  c.bonafide_mean = j.value("bonafide_mean", d.bonafide_mean);
  c.attack_mean = j.value("attack_mean", d.attack_mean);
  c.bonafide_cov = j.value("bonafide_cov", d.bonafide_cov);
  c.attack_cov = j.value("attack_cov", d.attack_cov);
  c.band_weights = j.value("band_weights", d.band_weights);
  c.seed = j.value("seed", d.seed);
}

void write_catalog(std::ostream& out, std::span<const SampleRecord> samples) {
  for (const auto& s : samples) out << nlohmann::json(s).dump() << '\n';
}

std::vector<SampleRecord> read_catalog(std::istream& in) {
  std::vector<SampleRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto rec = nlohmann::json::parse(line).get<SampleRecord>();
      rec.validate();
      out.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("catalog line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace padkit
