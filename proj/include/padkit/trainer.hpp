#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "padkit/dataset.hpp"
#include "padkit/metrics.hpp"
#include "padkit/model.hpp"
#include "padkit/strategies.hpp"

namespace padkit {

struct PtsConfig {
  bool enabled = false;
  double initial_rate = 0.5;
  double decay = 0.5;
};

struct DfqTrainConfig {
  bool enabled = false;
  DfqConfig queue;
  double weight = 1.0;
};

struct EmaConfig {
  bool enabled = false;
  double decay = 0.99;
};

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adamw;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Stage-2 stopping thresholds: the full-scale value and the relaxed one
/// desk-scale runs use.
inline constexpr double kFullScaleLossThreshold = 1e-4;
inline constexpr double kDeskLossThreshold = 1e-3;

struct TwoStageConfig {
  std::size_t stage1_batch = 512;
  std::size_t stage2_batch = 200;
  std::size_t stage1_epochs = 5;
  std::size_t stage2_max_epochs = 200;
  double loss_threshold = kFullScaleLossThreshold;
};

struct TrainConfig {
  LossRecipe recipe = LossRecipe::plain;
  std::size_t hidden_dim = 32;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  LrSchedule schedule = LrSchedule::constant(0.01);
  OptimizerConfig optimizer;
  double grl_lambda = 1.0;
  double focal_gamma = kDefaultFocalGamma;
  /// Beta(alpha, alpha) mixing inside each batch; 0 disables.
  double mixup_alpha = 0.0;
  double label_smoothing = 0.0;
  bool max_upsample = false;
  bool tta = false;
  /// Stops when the dev loss has not improved for this many epochs; 0 disables.
  std::size_t early_stopping_patience = 0;
  PtsConfig pts;
  DfqTrainConfig dfq;
  EmaConfig ema;
  TwoStageConfig two_stage;

  /// Throws ConfigError naming the first inconsistent field.
  void validate() const;
};

/// Feature-bearing samples of the train and dev bands.
struct TrainData {
  std::vector<SampleRecord> train;
  std::vector<SampleRecord> dev;

  static TrainData from_protocol(std::span<const SampleRecord> catalog,
                                 const ProtocolManifest& manifest);
  /// Throws ValidationError if features are missing or inconsistent, or a
  /// split lacks either class.
  std::size_t validate() const;
};

struct EpochRecord {
  std::size_t stage = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  std::map<std::string, double> components;
  double dev_loss = 0.0;
  double dev_auc = 0.0;
  double dev_eer = 0.0;
  double pts_rate = 1.0;
  std::size_t train_size = 0;
  std::size_t dfq_queue = 0;
  std::size_t batch_size = 0;
};

struct TrainResult {
  TinyModel model;
  std::vector<EpochRecord> history;
  bool early_stopped = false;
  std::optional<PtsState> pts;
  std::optional<DfqState> dfq;
};

TrainResult train(const TrainConfig& config, const TrainData& data);

struct TwoStageResult {
  TinyModel model;
  /// Raw parameters at the end of stage 1.
  TinyModel after_stage1;
  std::vector<EpochRecord> stage1;
  std::vector<EpochRecord> stage2;
  bool threshold_met = false;
};

/// Stage 1 trains the heads with frozen extractors at the large batch size.
/// Stage 2 unfreezes everything at the small batch size and stops once the
/// epoch training loss drops below the threshold or the epoch budget runs out.
TwoStageResult two_stage_train(const TrainConfig& config, const TrainData& data);

/// Scores keyed by sample id.
std::vector<ScoredSample> score_samples(const TinyModel& model,
                                        std::span<const SampleRecord> samples, bool tta = false);

/// Moving average over `window` epochs of the training loss.
std::vector<double> smoothed_loss(std::span<const EpochRecord> history, std::size_t window = 5);

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const EpochRecord& r);
void from_json(const nlohmann::json& j, EpochRecord& r);

/// One JSON object per line.
void write_history(std::ostream& out, std::span<const EpochRecord> history);

}  // namespace padkit
