#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "padkit/dataset.hpp"

namespace padkit {

// ---------------------------------------------------------------------------
// Progressive training (hard-sample curriculum)
// ---------------------------------------------------------------------------

/// Train/pending partition of the labelled pool plus the current sampling
/// rate. Scores handed to pts_step are liveness probabilities: a bona fide
/// sample with a low score, or an attack with a high one, is hard.
struct PtsState {
  std::map<std::string, Label> labels;
  std::set<std::string> train_ids;
  std::set<std::string> pending_ids;
  double rate = 1.0;
  double decay = 1.0;
  std::size_t steps = 0;
  /// Ids moved by the most recent step: bona fide first, then attacks, each
  /// in the order they were taken.
  std::vector<std::string> last_moved;

  bool operator==(const PtsState&) const = default;
};

/// Selects floor(rate * n_c) ids per class uniformly at random; the rest
/// start out pending.
PtsState pts_init(std::span<const LabeledId> samples, double initial_rate, double decay,
                  std::uint64_t seed);

/// Moves ceil(rate * |pending_c|) of the hardest pending ids of each class
/// into training, then multiplies the rate by the decay. Ties on score are
/// broken by id. pending_scores must cover exactly the pending ids.
PtsState pts_step(const PtsState& state, const std::map<std::string, double>& pending_scores);

// ---------------------------------------------------------------------------
// Dynamic feature queue
// ---------------------------------------------------------------------------

struct DfqConfig {
  std::size_t capacity = 64;
  double alpha = 0.5;
  double scale = 16.0;
};

/// Negative-class center plus a bounded FIFO of unit-norm negative features.
struct DfqState {
  std::vector<double> center;
  std::deque<std::vector<double>> queue;
  std::size_t capacity = 64;
  double alpha = 0.5;
  double scale = 16.0;
  /// Running sum of normalized negative features behind the center.
  std::vector<double> center_sum;
  std::uint64_t center_count = 0;
  std::uint64_t enqueued_total = 0;
};

DfqState dfq_init(std::span<const double> initial_center, const DfqConfig& config = {});

struct DfqLogits {
  double log0 = 0.0;  ///< cosine to the negative center
  double log1 = -1.0; ///< best cosine over the queue, -1 when empty
  std::size_t best = 0;  ///< queue index behind log1; meaningless when empty
};

DfqLogits dfq_logits(std::span<const double> feature, const DfqState& state);

/// Enqueues the normalized feature when log0 < alpha and evicts the head
/// once the queue exceeds capacity. Otherwise the state is unchanged.
DfqState dfq_update(const DfqState& state, std::span<const double> feature, double log0);

/// Folds one negative feature into the running-mean center.
DfqState dfq_update_center(const DfqState& state, std::span<const double> feature);

std::vector<double> l2_normalize(std::span<const double> v);

// ---------------------------------------------------------------------------
// Learning-rate schedules
// ---------------------------------------------------------------------------

enum class ScheduleKind {
  constant,
  cosine_warmup,
  cyclic,
  step_decay,
  cosine_annealing,
  cosine_restart,
};

struct LrSchedule {
  ScheduleKind kind = ScheduleKind::constant;
  double lr0 = 0.01;
  // cosine_warmup
  std::size_t warmup_epochs = 1;
  std::size_t total_epochs = 100;
  double floor_ratio = 0.01;
  // cyclic (triangular)
  double cyclic_low = 1e-5;
  double cyclic_high = 2e-3;
  std::size_t half_period = 10;
  // step_decay
  double step_factor = 0.8;
  std::size_t step_every = 20;
  // cosine_annealing / cosine_restart
  std::size_t t_max = 100;
  double eta_min = 0.0;
  double cycle_decay = 0.5;

  static LrSchedule constant(double lr);
  /// Linear warmup, then cosine down to floor_ratio * lr0 at the last epoch.
  static LrSchedule cosine_warmup(double lr0 = 0.01, std::size_t warmup = 1,
                                  std::size_t total = 100, double floor_ratio = 0.01);
  static LrSchedule cyclic(double low = 1e-5, double high = 2e-3, std::size_t half_period = 10);
  static LrSchedule step_decay(double lr0 = 1e-4, double factor = 0.8, std::size_t every = 20);
  static LrSchedule cosine_annealing(double lr0 = 0.01, std::size_t t_max = 100,
                                     double eta_min = 0.0);
  /// Warm restarts every t_max epochs; each restart peak is cycle_decay times
  /// the previous one.
  static LrSchedule cosine_restart(double lr0 = 1e-4, std::size_t cycle = 20,
                                   double cycle_decay = 0.5);
};

/// Pure in (schedule, epoch). Epochs past a finite horizon clamp to the final
/// value.
double lr_at(const LrSchedule& schedule, std::size_t epoch);

// ---------------------------------------------------------------------------
// EMA and early stopping
// ---------------------------------------------------------------------------

/// ema <- decay * ema + (1 - decay) * params.
std::vector<double> ema_update(std::span<const double> ema, std::span<const double> params,
                               double decay);

/// True iff none of the last `patience` values improves on the best value
/// seen before them. Lower is better.
bool early_stop(std::span<const double> history, std::size_t patience);

void to_json(nlohmann::json& j, const PtsState& s);
void from_json(const nlohmann::json& j, PtsState& s);
void to_json(nlohmann::json& j, const DfqConfig& c);
void from_json(const nlohmann::json& j, DfqConfig& c);
void to_json(nlohmann::json& j, const DfqState& s);
void from_json(const nlohmann::json& j, DfqState& s);
void to_json(nlohmann::json& j, const LrSchedule& s);
void from_json(const nlohmann::json& j, LrSchedule& s);
std::string_view to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(std::string_view text);

}  // namespace padkit
