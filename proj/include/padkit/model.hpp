#pragma once

// Desk-scale classifiers with hand-written gradients. A model is one or more
// extractor stubs (seeded random projections followed by tanh, or identity
// for a purely linear model) plus the heads a loss recipe needs.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "padkit/losses.hpp"
#include "padkit/strategies.hpp"

namespace padkit {

enum class LossRecipe { plain, ctel, hexianhua, opdai, chenyifan, ionetworks };

std::string_view to_string(LossRecipe recipe);
LossRecipe loss_recipe_from_string(std::string_view text);

enum class ParamRole { extractor, head, sub_center };

struct Param {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 1;
  ParamRole role = ParamRole::head;
  bool frozen = false;
  std::vector<double> value;

  bool operator==(const Param&) const = default;
};

using Gradients = std::vector<std::vector<double>>;

/// Quality band a training sample comes from, for the domain head.
enum class Domain { train_band = 0, dev_band = 1 };

struct Batch {
  std::vector<std::vector<double>> features;
  /// 1 = bona fide, 0 = attack; values in between are soft targets.
  std::vector<double> targets;
  std::vector<Domain> domains;

  std::size_t size() const { return features.size(); }
  void add(std::vector<double> feature, double target, Domain domain = Domain::train_band);
};

struct ForwardOptions {
  double grl_lambda = 1.0;
  double focal_gamma = kDefaultFocalGamma;
  /// When set, adds the queue cross-entropy on the first extractor's feature.
  const DfqState* dfq = nullptr;
  double dfq_weight = 1.0;
};

class TinyModel {
 public:
  static constexpr std::size_t kPixelCells = 4;
  static constexpr std::size_t kSubCenters = 3;

  /// hidden_dim = 0 builds identity extractors (a linear model).
  static TinyModel create(LossRecipe recipe, std::size_t input_dim, std::size_t hidden_dim,
                          std::uint64_t seed);
  /// Every parameter zero, except sub-centers which must stay unit length.
  static TinyModel zeros(LossRecipe recipe, std::size_t input_dim, std::size_t hidden_dim);

  LossRecipe recipe() const { return recipe_; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t hidden_dim() const { return hidden_dim_; }
  std::size_t feature_dim() const { return hidden_dim_ == 0 ? input_dim_ : hidden_dim_; }
  std::size_t extractor_count() const { return extractors_; }

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  const Param& param(std::string_view name) const;
  Param& param(std::string_view name);
  bool has_param(std::string_view name) const;
  std::size_t parameter_count() const;

  /// Flat copy of every parameter value, in declaration order.
  std::vector<double> flat() const;
  void set_flat(std::span<const double> values);

  void set_extractors_frozen(bool frozen);
  /// Keeps sub-centers on the unit sphere after an optimizer step.
  void renormalize();

  /// Feature of extractor k.
  std::vector<double> extract(std::span<const double> x, std::size_t k) const;
  /// Probability that x is bona fide, from the recipe's main head.
  double score(std::span<const double> x) const;

  bool operator==(const TinyModel&) const = default;

 private:
  TinyModel() = default;
  void add_param(std::string name, std::size_t rows, std::size_t cols, ParamRole role);
  std::size_t index(std::string_view name) const;

  LossRecipe recipe_ = LossRecipe::plain;
  std::size_t input_dim_ = 0;
  std::size_t hidden_dim_ = 0;
  std::size_t extractors_ = 1;
  std::vector<Param> params_;
  std::map<std::string, std::size_t, std::less<>> index_;

  friend void from_json(const nlohmann::json& j, TinyModel& model);
};

struct ForwardResult {
  double loss = 0.0;
  std::map<std::string, double> components;
  Gradients grads;
};

/// Batch-mean loss of the model's recipe and its parameter gradients. For
/// the ctel recipe the classification term only sees train-band samples,
/// the domain term sees all of them, and the extractor receives the domain
/// gradient through gradient reversal.
ForwardResult forward_backward(const TinyModel& model, const Batch& batch,
                               const ForwardOptions& options = {});
/// Same loss without gradients.
ForwardResult evaluate_loss(const TinyModel& model, const Batch& batch,
                            const ForwardOptions& options = {});

/// Bona fide probabilities. With tta, each score is averaged with the score
/// of the mirrored feature vector.
std::vector<double> predict(const TinyModel& model, std::span<const std::vector<double>> features,
                            bool tta = false, std::array<double, 2> tta_weights = {0.5, 0.5});

std::vector<double> mirror_feature(std::span<const double> x);

enum class OptimizerKind { sgd_momentum, adamw };

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::adamw;
  double lr = 1e-3;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  std::size_t step = 0;
  Gradients first;   ///< velocity (sgd) or first moment (adamw)
  Gradients second;  ///< second moment (adamw)

  static OptimizerState sgd(double lr, double momentum = 0.9);
  static OptimizerState adamw(double lr, double weight_decay = 1e-2, double beta1 = 0.9,
                              double beta2 = 0.999, double eps = 1e-8);
};

/// v <- m v + g; p <- p - lr v. Frozen parameters are left untouched.
void sgd_momentum_step(OptimizerState& state, std::vector<Param>& params, const Gradients& grads);
/// Decoupled weight decay with bias-corrected moments.
void adamw_step(OptimizerState& state, std::vector<Param>& params, const Gradients& grads);
void optimizer_step(OptimizerState& state, std::vector<Param>& params, const Gradients& grads);

void to_json(nlohmann::json& j, const TinyModel& model);
void from_json(const nlohmann::json& j, TinyModel& model);
std::string_view to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(std::string_view text);

}  // namespace padkit
