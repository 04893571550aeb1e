#pragma once

// Losses with analytic gradients. Every function returns the value and the
// gradient with respect to its differentiated input (logits, probabilities
// or angles, as documented per function).

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "padkit/dataset.hpp"

namespace padkit {

struct LossResult {
  double value = 0.0;
  std::vector<double> gradient;
};

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp]; the gradient is
/// evaluated at the clamped point.
inline constexpr double kProbClamp = 1e-7;
/// Lower clamp for 1 - cos(theta) in the angular margin loss.
inline constexpr double kCosClamp = 1e-7;
inline constexpr double kAngularMargin = 0.5;
inline constexpr double kDefaultFocalGamma = 2.0;

double sigmoid(double z);
double log_sum_exp(std::span<const double> logits);
std::vector<double> softmax(std::span<const double> logits);

/// Softmax cross-entropy; gradient with respect to the logits.
LossResult cross_entropy(std::span<const double> logits, std::size_t target_class);
LossResult cross_entropy(std::span<const double> logits, std::span<const double> target);

/// -(t log p + (1 - t) log(1 - p)); gradient with respect to p (length 1).
LossResult bce(double p, double t);

/// -(1 - p_t)^gamma log p_t. Soft targets mix the two one-sided terms, so
/// gamma = 0 reduces to bce for any t. Gradient with respect to p.
LossResult focal(double p, double t, double gamma = kDefaultFocalGamma);

/// Mean bce of a predicted map against the constant map of the label
/// (all ones for bona fide, all zeros for attack).
LossResult pixelwise_bce(std::span<const double> pred_map, Label label);

/// K unit sub-centers per class, stored [class][k][dim].
struct SubCenterBank {
  std::size_t classes = 1;
  std::size_t sub_centers = 3;
  std::size_t dim = 0;
  double scale = 16.0;
  std::vector<double> centers;

  static SubCenterBank random(std::size_t classes, std::size_t sub_centers, std::size_t dim,
                              std::uint64_t seed);
  std::span<const double> center(std::size_t cls, std::size_t k) const;
  std::span<double> center(std::size_t cls, std::size_t k);
  /// Rescales every sub-center to unit length.
  void renormalize();
};

struct SubCenterAngle {
  double theta = 0.0;
  std::size_t sub_center = 0;
};

/// Smallest angle between the feature and the class's sub-centers.
/// Throws ParameterError for a zero feature.
SubCenterAngle sub_center_angle(std::span<const double> feature, const SubCenterBank& bank,
                                std::size_t cls);

struct CosineGradient {
  double cosine = 0.0;
  std::vector<double> d_feature;
  std::vector<double> d_direction;
};

/// Cosine similarity of two nonzero vectors with its gradient with respect
/// to both.
CosineGradient cosine_with_gradient(std::span<const double> feature,
                                    std::span<const double> direction);

struct AngleGradient {
  double theta = 0.0;
  std::vector<double> d_feature;
  std::vector<double> d_direction;
};

/// Angle between two nonzero vectors with its gradient with respect to both.
/// The cosine is clamped just inside [-1, 1] for the derivative.
AngleGradient angle_with_gradient(std::span<const double> feature,
                                  std::span<const double> direction);

/// -(1/n) sum( t cos(theta + 0.5) + (1 - t) log(1 - cos theta) ), taken as
/// written: the first term carries no logarithm, so values can be negative.
/// Gradient with respect to theta.
LossResult angular_margin_loss(std::span<const double> thetas, std::span<const double> targets);

/// Gradient reversal: identity forward, -lambda * g backward.
std::vector<double> grl(std::span<const double> gradient_in, double lambda = 1.0);

struct GradientReversal {
  double lambda = 1.0;

  std::vector<double> forward(std::span<const double> x) const { return {x.begin(), x.end()}; }
  std::vector<double> backward(std::span<const double> g) const { return grl(g, lambda); }
};

struct CompositeTerm {
  std::string_view name;
  double weight;
};

inline constexpr std::array<CompositeTerm, 2> kCtelTerms{{{"cls", 1.0}, {"adv", 1.0}}};
inline constexpr std::array<CompositeTerm, 2> kHexianhuaTerms{{{"cls", 1.0}, {"focal", 0.5}}};
inline constexpr std::array<CompositeTerm, 3> kOpdaiTerms{
    {{"focal1", 1.0}, {"focal2", 0.5}, {"focal3", 0.5}}};
inline constexpr std::array<CompositeTerm, 6> kChenyifanTerms{{{"ori", 3.0},
                                                                {"face", 1.0},
                                                                {"eyes", 0.5},
                                                                {"nose", 0.5},
                                                                {"chin", 0.5},
                                                                {"concat", 3.0}}};
inline constexpr std::array<CompositeTerm, 2> kIonetworksTerms{{{"bce", 0.5}, {"ang", 0.5}}};

double total_ctel(double cls, double adv);
double total_hexianhua(double cls, double focal_loss);
double total_opdai(double focal1, double focal2, double focal3);
double total_chenyifan(double ori, double face, double eyes, double nose, double chin,
                       double concat);
double total_ionetworks(double bce_loss, double ang);

/// Weighted sum of component losses that share one differentiated input.
LossResult combine(std::span<const CompositeTerm> terms, std::span<const LossResult> parts);

}  // namespace padkit
