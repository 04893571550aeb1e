#include "padkit/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "padkit/error.hpp"

namespace padkit {

namespace {

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log_sum_exp(std::span<const double> logits) {
  if (logits.empty()) throw ParameterError("empty logits");
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double z : logits) s += std::exp(z - m);
  return m + std::log(s);
}

std::vector<double> softmax(std::span<const double> logits) {
  const double lse = log_sum_exp(logits);
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) p[i] = std::exp(logits[i] - lse);
  return p;
}

LossResult cross_entropy(std::span<const double> logits, std::size_t target_class) {
  if (target_class >= logits.size()) throw ParameterError("target class out of range");
  const double lse = log_sum_exp(logits);
  LossResult r;
  r.value = lse - logits[target_class];
  r.gradient.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) r.gradient[i] = std::exp(logits[i] - lse);
  r.gradient[target_class] -= 1.0;
  return r;
}

LossResult cross_entropy(std::span<const double> logits, std::span<const double> target) {
  if (target.size() != logits.size()) throw ParameterError("target size mismatch");
  const double lse = log_sum_exp(logits);
  double mass = 0.0;
  LossResult r;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    r.value += target[i] * (lse - logits[i]);
    mass += target[i];
  }
  r.gradient.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    r.gradient[i] = mass * std::exp(logits[i] - lse) - target[i];
  }
  return r;
}

LossResult bce(double p, double t) {
  const double q = clamp_prob(p);
  LossResult r;
  r.value = -(t * std::log(q) + (1.0 - t) * std::log(1.0 - q));
  r.gradient = {-t / q + (1.0 - t) / (1.0 - q)};
  return r;
}

LossResult focal(double p, double t, double gamma) {
  if (!(gamma >= 0.0)) throw ParameterError("focal gamma must be nonnegative");
  if (gamma == 0.0) return bce(p, t);
  const double q = clamp_prob(p);
  const double log_q = std::log(q);
  const double log_1mq = std::log(1.0 - q);
  // Positive side: -(1-q)^g log q. Negative side: -q^g log(1-q).
  const double pos_w = std::pow(1.0 - q, gamma);
  const double neg_w = std::pow(q, gamma);
  LossResult r;
  r.value = -t * pos_w * log_q - (1.0 - t) * neg_w * log_1mq;
  const double d_pos = gamma * std::pow(1.0 - q, gamma - 1.0) * log_q - pos_w / q;
  const double d_neg = -gamma * std::pow(q, gamma - 1.0) * log_1mq + neg_w / (1.0 - q);
  r.gradient = {t * d_pos + (1.0 - t) * d_neg};
  return r;
}

LossResult pixelwise_bce(std::span<const double> pred_map, Label label) {
  if (pred_map.empty()) throw ParameterError("empty prediction map");
  const double t = label == Label::bonafide ? 1.0 : 0.0;
  const double n = static_cast<double>(pred_map.size());
  LossResult r;
  r.gradient.resize(pred_map.size());
  for (std::size_t i = 0; i < pred_map.size(); ++i) {
    const LossResult e = bce(pred_map[i], t);
    r.value += e.value;
    r.gradient[i] = e.gradient[0] / n;
  }
  r.value /= n;
  return r;
}

SubCenterBank SubCenterBank::random(std::size_t classes, std::size_t sub_centers, std::size_t dim,
                                    std::uint64_t seed) {
  if (classes == 0 || sub_centers == 0 || dim == 0) throw ParameterError("empty sub-center bank");
  SubCenterBank bank;
  bank.classes = classes;
  bank.sub_centers = sub_centers;
  bank.dim = dim;
  bank.centers.resize(classes * sub_centers * dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : bank.centers) v = normal(rng);
  bank.renormalize();
  return bank;
}

std::span<const double> SubCenterBank::center(std::size_t cls, std::size_t k) const {
  return std::span<const double>(centers).subspan((cls * sub_centers + k) * dim, dim);
}

std::span<double> SubCenterBank::center(std::size_t cls, std::size_t k) {
  return std::span<double>(centers).subspan((cls * sub_centers + k) * dim, dim);
}

void SubCenterBank::renormalize() {
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t k = 0; k < sub_centers; ++k) {
      auto v = center(c, k);
      const double n = norm(v);
      if (!(n > 0.0)) throw ParameterError("sub-center collapsed to zero");
      for (double& x : v) x /= n;
    }
  }
}

CosineGradient cosine_with_gradient(std::span<const double> feature,
                                    std::span<const double> direction) {
  if (feature.size() != direction.size()) throw ParameterError("dimension mismatch");
  const double nf = norm(feature);
  const double nd = norm(direction);
  if (!(nf > 0.0) || !(nd > 0.0)) throw ParameterError("cosine of a zero vector");
  double dot = 0.0;
  for (std::size_t i = 0; i < feature.size(); ++i) dot += feature[i] * direction[i];
  CosineGradient g;
  g.cosine = std::clamp(dot / (nf * nd), -1.0, 1.0);
  g.d_feature.resize(feature.size());
  g.d_direction.resize(feature.size());
  for (std::size_t i = 0; i < feature.size(); ++i) {
    const double u = feature[i] / nf;
    const double v = direction[i] / nd;
    g.d_feature[i] = (v - g.cosine * u) / nf;
    g.d_direction[i] = (u - g.cosine * v) / nd;
  }
  return g;
}

AngleGradient angle_with_gradient(std::span<const double> feature,
                                  std::span<const double> direction) {
  CosineGradient cg = cosine_with_gradient(feature, direction);
  const double c = cg.cosine;
  const double d_theta_d_c = -1.0 / std::sqrt(std::max(1.0 - c * c, 1e-14));
  AngleGradient g;
  g.theta = std::acos(c);
  g.d_feature = std::move(cg.d_feature);
  g.d_direction = std::move(cg.d_direction);
  for (double& v : g.d_feature) v *= d_theta_d_c;
  for (double& v : g.d_direction) v *= d_theta_d_c;
  return g;
}

SubCenterAngle sub_center_angle(std::span<const double> feature, const SubCenterBank& bank,
                                std::size_t cls) {
  if (feature.size() != bank.dim) throw ParameterError("feature dimension mismatch");
  if (cls >= bank.classes) throw ParameterError("class out of range");
  const double nf = norm(feature);
  if (!(nf > 0.0)) throw ParameterError("sub-center angle of a zero feature");
  SubCenterAngle best{std::numeric_limits<double>::infinity(), 0};
  for (std::size_t k = 0; k < bank.sub_centers; ++k) {
    const auto w = bank.center(cls, k);
    double dot = 0.0;
    for (std::size_t i = 0; i < feature.size(); ++i) dot += feature[i] * w[i];
    const double theta = std::acos(std::clamp(dot / (nf * norm(w)), -1.0, 1.0));
    if (theta < best.theta) best = {theta, k};
  }
  return best;
}

LossResult angular_margin_loss(std::span<const double> thetas, std::span<const double> targets) {
  if (thetas.size() != targets.size() || thetas.empty()) {
    throw ParameterError("angular margin loss needs matching non-empty inputs");
  }
  const double n = static_cast<double>(thetas.size());
  LossResult r;
  r.gradient.resize(thetas.size());
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    const double theta = thetas[i];
    const double t = targets[i];
    const double one_minus_cos = 1.0 - std::cos(theta);
    const bool clamped = one_minus_cos < kCosClamp;
    const double gap = clamped ? kCosClamp : one_minus_cos;
    r.value += t * std::cos(theta + kAngularMargin) + (1.0 - t) * std::log(gap);
    double d = -t * std::sin(theta + kAngularMargin);
    if (!clamped) d += (1.0 - t) * std::sin(theta) / gap;
    r.gradient[i] = -d / n;
  }
  r.value = -r.value / n;
  return r;
}

std::vector<double> grl(std::span<const double> gradient_in, double lambda) {
  if (!(lambda >= 0.0)) throw ParameterError("GRL lambda must be nonnegative");
  std::vector<double> out(gradient_in.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = -lambda * gradient_in[i];
  return out;
}

double total_ctel(double cls, double adv) { return cls + adv; }

double total_hexianhua(double cls, double focal_loss) { return cls + 0.5 * focal_loss; }

double total_opdai(double focal1, double focal2, double focal3) {
  return focal1 + 0.5 * focal2 + 0.5 * focal3;
}

double total_chenyifan(double ori, double face, double eyes, double nose, double chin,
                       double concat) {
  return 3.0 * ori + face + 0.5 * eyes + 0.5 * nose + 0.5 * chin + 3.0 * concat;
}

double total_ionetworks(double bce_loss, double ang) { return 0.5 * bce_loss + 0.5 * ang; }

LossResult combine(std::span<const CompositeTerm> terms, std::span<const LossResult> parts) {
  if (terms.size() != parts.size()) throw ParameterError("one loss per composite term");
  LossResult r;
  if (!parts.empty()) r.gradient.assign(parts[0].gradient.size(), 0.0);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    if (parts[k].gradient.size() != r.gradient.size()) {
      throw ParameterError("composite parts must share the differentiated input");
    }
    r.value += terms[k].weight * parts[k].value;
    for (std::size_t i = 0; i < r.gradient.size(); ++i) {
      r.gradient[i] += terms[k].weight * parts[k].gradient[i];
    }
  }
  return r;
}

}  // namespace padkit
