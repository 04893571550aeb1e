#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace padkit {

enum class Label { attack = 0, bonafide = 1 };

enum class AttackCategory {
  none,
  mask_resin,
  mask_silicone,
  mask_plaster,
  mask_headgear,
  flat_2d,
  adversarial,
};

std::string_view to_string(Label label);
std::string_view to_string(AttackCategory category);
Label label_from_string(std::string_view text);
AttackCategory attack_category_from_string(std::string_view text);

/// Capture metadata carried by a face-track folder name,
/// `Group_Scene_Camera_Epoch_Time`.
struct FolderMeta {
  std::string group;
  std::string scene;
  std::string camera;
  std::string epoch;
  std::string time;

  bool operator==(const FolderMeta&) const = default;
};

/// Splits a track folder name into its five fields. Underscore is the only
/// delimiter, so fields can never contain one. Throws ParseError naming the
/// offending field for wrong field counts or empty fields.
FolderMeta parse_track_name(std::string_view name);
std::string format_track_name(const FolderMeta& meta);

/// One face-track image. Features only exist for synthetic runs.
struct SampleRecord {
  std::string sample_id;
  Label label = Label::bonafide;
  AttackCategory attack_category = AttackCategory::none;
  double quality_score = 1.0;
  FolderMeta meta;
  std::optional<std::vector<double>> feature;

  /// Throws ValidationError if the score is outside [0,1] or the category
  /// disagrees with the label.
  void validate() const;
};

enum class Split { train, dev, test };
std::string_view to_string(Split split);

/// A quality interval, always closed below.
struct QualityBand {
  double lower = 0.0;
  double upper = 1.0;
  bool upper_closed = false;

  bool contains(double score) const {
    return score >= lower && (upper_closed ? score <= upper : score < upper);
  }
  bool operator==(const QualityBand&) const = default;
};

/// Train [0.4, 1], dev [0.3, 0.4), test [0, 0.3).
struct QualityBands {
  QualityBand train{0.4, 1.0, true};
  QualityBand dev{0.3, 0.4, false};
  QualityBand test{0.0, 0.3, false};

  const QualityBand& operator[](Split split) const;
  bool operator==(const QualityBands&) const = default;
};

struct ProtocolManifest {
  std::vector<std::string> train_ids;
  std::vector<std::string> dev_ids;
  std::vector<std::string> test_ids;
  QualityBands bands;

  const std::vector<std::string>& ids(Split split) const;
  bool operator==(const ProtocolManifest&) const = default;
};

/// Partitions samples by quality score into the three bands. Input order is
/// preserved within each split.
ProtocolManifest build_protocol3(std::span<const SampleRecord> samples);

struct LabeledId {
  std::string id;
  Label label = Label::bonafide;

  bool operator==(const LabeledId&) const = default;
};

/// Max Upsampling: the minority class is resampled with replacement until
/// both classes match the majority count. Originals keep their order and
/// the resampled ids are appended after them.
std::vector<LabeledId> max_upsample(std::span<const LabeledId> ids, std::uint64_t seed);

/// Parameters of the synthetic stand-in dataset: one multivariate Gaussian
/// per class, quality scores drawn uniformly inside bands picked by weight.
struct SynthConfig {
  std::size_t dim = 16;
  std::size_t n_bonafide = 100;
  std::size_t n_attack = 100;
  /// Distance between class means along the diagonal direction. Ignored when
  /// explicit means are given.
  double separation = 6.0;
  std::vector<double> bonafide_mean;
  std::vector<double> attack_mean;
  /// Row-major dim x dim; empty means identity.
  std::vector<double> bonafide_cov;
  std::vector<double> attack_cov;
  /// Relative sizes of the train, dev and test quality bands.
  std::array<double, 3> band_weights{159063.0, 89276.0, 161882.0};
  std::uint64_t seed = 7;
};

std::vector<SampleRecord> synth_dataset(const SynthConfig& config);

void to_json(nlohmann::json& j, const FolderMeta& meta);
void from_json(const nlohmann::json& j, FolderMeta& meta);
void to_json(nlohmann::json& j, const SampleRecord& record);
void from_json(const nlohmann::json& j, SampleRecord& record);
void to_json(nlohmann::json& j, const QualityBand& band);
void from_json(const nlohmann::json& j, QualityBand& band);
void to_json(nlohmann::json& j, const ProtocolManifest& manifest);
void from_json(const nlohmann::json& j, ProtocolManifest& manifest);
void to_json(nlohmann::json& j, const SynthConfig& config);
void from_json(const nlohmann::json& j, SynthConfig& config);

/// JSON lines, one SampleRecord per line.
void write_catalog(std::ostream& out, std::span<const SampleRecord> samples);
std::vector<SampleRecord> read_catalog(std::istream& in);

}  // namespace padkit
