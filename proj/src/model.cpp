#include "padkit/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "padkit/error.hpp"
#include "padkit/preprocess.hpp"

namespace padkit {

namespace {

constexpr std::array<std::string_view, 5> kBranchNames{"ori", "face", "eyes", "nose", "chin"};
constexpr std::array<double, 5> kBranchWeights{3.0, 1.0, 0.5, 0.5, 0.5};
constexpr double kConcatWeight = 3.0;

std::size_t extractor_count_for(LossRecipe recipe) {
  switch (recipe) {
    case LossRecipe::opdai: return 2;
    case LossRecipe::chenyifan: return kBranchNames.size();
    default: return 1;
  }
}

std::string ext_name(std::size_t k, std::string_view part) {
  return "extractor" + std::to_string(k) + "." + std::string(part);
}

std::vector<double> affine(const Param& w, const Param& b, std::span<const double> x) {
  std::vector<double> out(w.rows);
  for (std::size_t r = 0; r < w.rows; ++r) {
    double s = b.value[r];
    const double* row = w.value.data() + r * w.cols;
    for (std::size_t c = 0; c < w.cols; ++c) s += row[c] * x[c];
    out[r] = s;
  }
  return out;
}

// Accumulates dW += dout x^T, db += dout, and optionally dx += W^T dout.
void affine_backward(const Param& w, std::span<const double> x, std::span<const double> dout,
                     std::vector<double>& gw, std::vector<double>& gb, std::span<double> dx) {
  for (std::size_t r = 0; r < w.rows; ++r) {
    const double d = dout[r];
    if (d == 0.0) continue;
    gb[r] += d;
    const double* row = w.value.data() + r * w.cols;
    double* grow = gw.data() + r * w.cols;
    for (std::size_t c = 0; c < w.cols; ++c) {
      grow[c] += d * x[c];
      if (!dx.empty()) dx[c] += d * row[c];
    }
  }
}

std::vector<double> concat(const std::vector<std::vector<double>>& parts, std::size_t first,
                           std::size_t count) {
  std::vector<double> out;
  for (std::size_t k = first; k < first + count; ++k) {
    out.insert(out.end(), parts[k].begin(), parts[k].end());
  }
  return out;
}

double target_to_prob(double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("training target outside [0,1]");
  return t;
}

}  // namespace

std::string_view to_string(LossRecipe recipe) {
  switch (recipe) {
    case LossRecipe::plain: return "plain";
    case LossRecipe::ctel: return "ctel";
    case LossRecipe::hexianhua: return "hexianhua";
    case LossRecipe::opdai: return "opdai";
    case LossRecipe::chenyifan: return "chenyifan";
    case LossRecipe::ionetworks: return "ionetworks";
  }
  return "unknown";
}

LossRecipe loss_recipe_from_string(std::string_view text) {
  for (auto r : {LossRecipe::plain, LossRecipe::ctel, LossRecipe::hexianhua, LossRecipe::opdai,
                 LossRecipe::chenyifan, LossRecipe::ionetworks}) {
    if (to_string(r) == text) return r;
  }
  throw ConfigError("unknown loss recipe '" + std::string(text) + "'");
}

void Batch::add(std::vector<double> feature, double target, Domain domain) {
  features.push_back(std::move(feature));
  targets.push_back(target);
  domains.push_back(domain);
}

void TinyModel::add_param(std::string name, std::size_t rows, std::size_t cols, ParamRole role) {
  index_.emplace(name, params_.size());
  Param p;
  p.name = std::move(name);
  p.rows = rows;
  p.cols = cols;
  p.role = role;
  p.value.assign(rows * cols, 0.0);
  params_.push_back(std::move(p));
}

TinyModel TinyModel::zeros(LossRecipe recipe, std::size_t input_dim, std::size_t hidden_dim) {
  if (input_dim == 0) throw ConfigError("model input dimension must be positive");
  TinyModel m;
  m.recipe_ = recipe;
  m.input_dim_ = input_dim;
  m.hidden_dim_ = hidden_dim;
  m.extractors_ = extractor_count_for(recipe);
  const std::size_t f = m.feature_dim();
  if (hidden_dim > 0) {
    for (std::size_t k = 0; k < m.extractors_; ++k) {
      m.add_param(ext_name(k, "weight"), hidden_dim, input_dim, ParamRole::extractor);
      m.add_param(ext_name(k, "bias"), hidden_dim, 1, ParamRole::extractor);
    }
  }
  switch (recipe) {
    case LossRecipe::plain:
    case LossRecipe::hexianhua:
      m.add_param("cls.weight", 2, f, ParamRole::head);
      m.add_param("cls.bias", 2, 1, ParamRole::head);
      break;
    case LossRecipe::ctel:
      m.add_param("cls.weight", 2, f, ParamRole::head);
      m.add_param("cls.bias", 2, 1, ParamRole::head);
      m.add_param("domain.weight", 2, f, ParamRole::head);
      m.add_param("domain.bias", 2, 1, ParamRole::head);
      break;
    case LossRecipe::opdai:
      m.add_param("mlp1.weight", 1, 2 * f, ParamRole::head);
      m.add_param("mlp1.bias", 1, 1, ParamRole::head);
      m.add_param("mlp2.weight", 1, f, ParamRole::head);
      m.add_param("mlp2.bias", 1, 1, ParamRole::head);
      m.add_param("mlp3.weight", 1, f, ParamRole::head);
      m.add_param("mlp3.bias", 1, 1, ParamRole::head);
      break;
    case LossRecipe::chenyifan:
      for (auto name : kBranchNames) {
        m.add_param(std::string(name) + ".weight", 1, f, ParamRole::head);
        m.add_param(std::string(name) + ".bias", 1, 1, ParamRole::head);
      }
      m.add_param("concat.weight", 1, kBranchNames.size() * f, ParamRole::head);
      m.add_param("concat.bias", 1, 1, ParamRole::head);
      break;
    case LossRecipe::ionetworks: {
      m.add_param("pixel.weight", kPixelCells, f, ParamRole::head);
      m.add_param("pixel.bias", kPixelCells, 1, ParamRole::head);
      m.add_param("subcenter", kSubCenters, f, ParamRole::sub_center);
      // Fixed unit directions so that even the all-zero model is well defined.
      Param& sc = m.param("subcenter");
      for (std::size_t k = 0; k < kSubCenters; ++k) sc.value[k * f + (k % f)] = 1.0;
      break;
    }
  }
  return m;
}

TinyModel TinyModel::create(LossRecipe recipe, std::size_t input_dim, std::size_t hidden_dim,
                            std::uint64_t seed) {
  TinyModel m = zeros(recipe, input_dim, hidden_dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Param& p : m.params_) {
    if (p.name.ends_with(".bias")) continue;
    double sd = 0.0;
    switch (p.role) {
      case ParamRole::extractor: sd = 1.0 / std::sqrt(static_cast<double>(p.cols)); break;
      case ParamRole::head: sd = 0.01; break;
      case ParamRole::sub_center: sd = 1.0; break;
    }
    for (double& v : p.value) v = sd * normal(rng);
  }
  m.renormalize();
  return m;
}

std::size_t TinyModel::index(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ParameterError("model has no parameter '" + std::string(name) + "'");
  return it->second;
}

const Param& TinyModel::param(std::string_view name) const { return params_[index(name)]; }
Param& TinyModel::param(std::string_view name) { return params_[index(name)]; }
bool TinyModel::has_param(std::string_view name) const { return index_.contains(name); }

std::size_t TinyModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::vector<double> TinyModel::flat() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& p : params_) out.insert(out.end(), p.value.begin(), p.value.end());
  return out;
}

void TinyModel::set_flat(std::span<const double> values) {
  if (values.size() != parameter_count()) throw ParameterError("flat parameter size mismatch");
  std::size_t at = 0;
  for (auto& p : params_) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(at), p.value.size(), p.value.begin());
    at += p.value.size();
  }
}

void TinyModel::set_extractors_frozen(bool frozen) {
  for (auto& p : params_) {
    if (p.role == ParamRole::extractor) p.frozen = frozen;
  }
}

void TinyModel::renormalize() {
  for (auto& p : params_) {
    if (p.role != ParamRole::sub_center) continue;
    for (std::size_t r = 0; r < p.rows; ++r) {
      double* row = p.value.data() + r * p.cols;
      double n = 0.0;
      for (std::size_t c = 0; c < p.cols; ++c) n += row[c] * row[c];
      n = std::sqrt(n);
      if (!(n > 0.0)) throw ParameterError("sub-center collapsed to zero");
      for (std::size_t c = 0; c < p.cols; ++c) row[c] /= n;
    }
  }
}

std::vector<double> TinyModel::extract(std::span<const double> x, std::size_t k) const {
  if (x.size() != input_dim_) throw ValidationError("feature dimension mismatch");
  if (k >= extractors_) throw ParameterError("extractor index out of range");
  if (hidden_dim_ == 0) return {x.begin(), x.end()};
  std::vector<double> h = affine(param(ext_name(k, "weight")), param(ext_name(k, "bias")), x);
  for (double& v : h) v = std::tanh(v);
  return h;
}

double TinyModel::score(std::span<const double> x) const {
  std::vector<std::vector<double>> hs;
  for (std::size_t k = 0; k < extractors_; ++k) hs.push_back(extract(x, k));
  switch (recipe_) {
    case LossRecipe::plain:
    case LossRecipe::ctel:
    case LossRecipe::hexianhua: {
      const auto z = affine(param("cls.weight"), param("cls.bias"), hs[0]);
      return softmax(z)[1];
    }
    case LossRecipe::opdai:
      return sigmoid(affine(param("mlp1.weight"), param("mlp1.bias"), concat(hs, 0, 2))[0]);
    case LossRecipe::chenyifan:
      return sigmoid(affine(param("concat.weight"), param("concat.bias"),
                            concat(hs, 0, kBranchNames.size()))[0]);
    case LossRecipe::ionetworks: {
      const auto q = affine(param("pixel.weight"), param("pixel.bias"), hs[0]);
      double s = 0.0;
      for (double v : q) s += sigmoid(v);
      return s / static_cast<double>(q.size());
    }
  }
  return 0.0;
}

namespace {

ForwardResult run(const TinyModel& model, const Batch& batch, const ForwardOptions& opt,
                  bool need_grad) {
  const std::size_t n = batch.size();
  if (n == 0) throw ValidationError("empty batch");
  if (batch.targets.size() != n || batch.domains.size() != n) {
    throw ValidationError("batch fields differ in length");
  }
  if (!(opt.grl_lambda >= 0.0)) throw ParameterError("GRL lambda must be nonnegative");

  const auto& params = model.params();
  ForwardResult out;
  if (need_grad) {
    out.grads.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) out.grads[i].assign(params[i].value.size(), 0.0);
  }
  // Parameter indices by name, resolved once.
  std::map<std::string, std::size_t, std::less<>> at;
  for (std::size_t i = 0; i < params.size(); ++i) at.emplace(params[i].name, i);
  auto P = [&](std::string_view name) -> const Param& { return params[at.find(name)->second]; };
  auto G = [&](std::string_view name) -> std::vector<double>& {
    return out.grads[at.find(name)->second];
  };

  const LossRecipe recipe = model.recipe();
  const std::size_t ne = model.extractor_count();
  const std::size_t f = model.feature_dim();
  const double inv_n = 1.0 / static_cast<double>(n);
  std::size_t n_train = 0;
  for (auto d : batch.domains) n_train += d == Domain::train_band ? 1 : 0;
  const double inv_train = n_train > 0 ? 1.0 / static_cast<double>(n_train) : 0.0;

  std::map<std::string, double>& comp = out.components;
  switch (recipe) {
    case LossRecipe::plain: comp["cls"] = 0.0; break;
    case LossRecipe::ctel: comp["cls"] = 0.0; comp["adv"] = 0.0; break;
    case LossRecipe::hexianhua: comp["cls"] = 0.0; comp["focal"] = 0.0; break;
    case LossRecipe::opdai:
      for (auto t : kOpdaiTerms) comp[std::string(t.name)] = 0.0;
      break;
    case LossRecipe::chenyifan:
      for (auto t : kChenyifanTerms) comp[std::string(t.name)] = 0.0;
      break;
    case LossRecipe::ionetworks: comp["bce"] = 0.0; comp["ang"] = 0.0; break;
  }
  if (opt.dfq != nullptr) comp["dfq"] = 0.0;

  for (std::size_t i = 0; i < n; ++i) {
    const auto& x = batch.features[i];
    const double t = target_to_prob(batch.targets[i]);
    const std::array<double, 2> dist{1.0 - t, t};
    std::vector<std::vector<double>> hs(ne);
    for (std::size_t k = 0; k < ne; ++k) hs[k] = model.extract(x, k);
    std::vector<std::vector<double>> dhs(ne, std::vector<double>(f, 0.0));

    switch (recipe) {
      case LossRecipe::plain:
      case LossRecipe::hexianhua:
      case LossRecipe::ctel: {
        const bool use_cls = recipe != LossRecipe::ctel || batch.domains[i] == Domain::train_band;
        if (use_cls) {
          const double w = recipe == LossRecipe::ctel ? inv_train : inv_n;
          const auto z = affine(P("cls.weight"), P("cls.bias"), hs[0]);
          const LossResult ce = cross_entropy(z, dist);
          comp["cls"] += w * ce.value;
          std::vector<double> dz(2);
          for (int c = 0; c < 2; ++c) dz[c] = w * ce.gradient[c];
          if (recipe == LossRecipe::hexianhua) {
            const double p = softmax(z)[1];
            const LossResult fl = focal(p, t, opt.focal_gamma);
            comp["focal"] += inv_n * fl.value;
            const double dp = 0.5 * inv_n * fl.gradient[0] * p * (1.0 - p);
            dz[0] -= dp;
            dz[1] += dp;
          }
          if (need_grad) {
            affine_backward(P("cls.weight"), hs[0], dz, G("cls.weight"), G("cls.bias"), dhs[0]);
          }
        }
        if (recipe == LossRecipe::ctel) {
          const auto d = affine(P("domain.weight"), P("domain.bias"), hs[0]);
          const LossResult ce = cross_entropy(d, static_cast<std::size_t>(batch.domains[i]));
          comp["adv"] += inv_n * ce.value;
          if (need_grad) {
            std::vector<double> dd{inv_n * ce.gradient[0], inv_n * ce.gradient[1]};
            std::vector<double> dh_dom(f, 0.0);
            affine_backward(P("domain.weight"), hs[0], dd, G("domain.weight"), G("domain.bias"),
                            dh_dom);
            const auto reversed = grl(dh_dom, opt.grl_lambda);
            for (std::size_t c = 0; c < f; ++c) dhs[0][c] += reversed[c];
          }
        }
        break;
      }
      case LossRecipe::opdai: {
        const auto cat = concat(hs, 0, 2);
        const std::array<std::string_view, 3> heads{"mlp1", "mlp2", "mlp3"};
        const std::array<const std::vector<double>*, 3> inputs{&cat, &hs[0], &hs[1]};
        for (std::size_t h = 0; h < 3; ++h) {
          const std::string wn = std::string(heads[h]) + ".weight";
          const std::string bn = std::string(heads[h]) + ".bias";
          const double s = affine(P(wn), P(bn), *inputs[h])[0];
          const double p = sigmoid(s);
          const LossResult fl = focal(p, t, opt.focal_gamma);
          comp[std::string(kOpdaiTerms[h].name)] += inv_n * fl.value;
          if (!need_grad) continue;
          const std::vector<double> ds{kOpdaiTerms[h].weight * inv_n * fl.gradient[0] * p * (1.0 - p)};
          if (h == 0) {
            std::vector<double> dcat(2 * f, 0.0);
            affine_backward(P(wn), cat, ds, G(wn), G(bn), dcat);
            for (std::size_t c = 0; c < f; ++c) {
              dhs[0][c] += dcat[c];
              dhs[1][c] += dcat[f + c];
            }
          } else {
            affine_backward(P(wn), *inputs[h], ds, G(wn), G(bn), dhs[h - 1]);
          }
        }
        break;
      }
      case LossRecipe::chenyifan: {
        for (std::size_t k = 0; k < kBranchNames.size(); ++k) {
          const std::string wn = std::string(kBranchNames[k]) + ".weight";
          const std::string bn = std::string(kBranchNames[k]) + ".bias";
          const double p = sigmoid(affine(P(wn), P(bn), hs[k])[0]);
          const LossResult b = bce(p, t);
          comp[std::string(kBranchNames[k])] += inv_n * b.value;
          if (!need_grad) continue;
          const std::vector<double> ds{kBranchWeights[k] * inv_n * b.gradient[0] * p * (1.0 - p)};
          affine_backward(P(wn), hs[k], ds, G(wn), G(bn), dhs[k]);
        }
        const auto cat = concat(hs, 0, kBranchNames.size());
        const double p = sigmoid(affine(P("concat.weight"), P("concat.bias"), cat)[0]);
        const LossResult b = bce(p, t);
        comp["concat"] += inv_n * b.value;
        if (need_grad) {
          const std::vector<double> ds{kConcatWeight * inv_n * b.gradient[0] * p * (1.0 - p)};
          std::vector<double> dcat(cat.size(), 0.0);
          affine_backward(P("concat.weight"), cat, ds, G("concat.weight"), G("concat.bias"), dcat);
          for (std::size_t k = 0; k < kBranchNames.size(); ++k) {
            for (std::size_t c = 0; c < f; ++c) dhs[k][c] += dcat[k * f + c];
          }
        }
        break;
      }
      case LossRecipe::ionetworks: {
        const auto q = affine(P("pixel.weight"), P("pixel.bias"), hs[0]);
        const double cells = static_cast<double>(q.size());
        std::vector<double> dq(q.size());
        double pix = 0.0;
        for (std::size_t j = 0; j < q.size(); ++j) {
          const double p = sigmoid(q[j]);
          const LossResult b = bce(p, t);
          pix += b.value / cells;
          dq[j] = 0.5 * inv_n * b.gradient[0] / cells * p * (1.0 - p);
        }
        comp["bce"] += inv_n * pix;
        const Param& sc = P("subcenter");
        AngleGradient best;
        std::size_t best_k = 0;
        for (std::size_t k = 0; k < sc.rows; ++k) {
          std::span<const double> dir(sc.value.data() + k * f, f);
          AngleGradient a = angle_with_gradient(hs[0], dir);
          if (k == 0 || a.theta < best.theta) {
            best = std::move(a);
            best_k = k;
          }
        }
        const std::array<double, 1> theta{best.theta};
        const std::array<double, 1> tgt{t};
        const LossResult ang = angular_margin_loss(theta, tgt);
        comp["ang"] += inv_n * ang.value;
        if (need_grad) {
          affine_backward(P("pixel.weight"), hs[0], dq, G("pixel.weight"), G("pixel.bias"), dhs[0]);
          const double dtheta = 0.5 * inv_n * ang.gradient[0];
          auto& gs = G("subcenter");
          for (std::size_t c = 0; c < f; ++c) {
            dhs[0][c] += dtheta * best.d_feature[c];
            gs[best_k * f + c] += dtheta * best.d_direction[c];
          }
        }
        break;
      }
    }

    if (opt.dfq != nullptr) {
      const DfqState& q = *opt.dfq;
      const CosineGradient c0 = cosine_with_gradient(hs[0], q.center);
      std::array<double, 2> logits{q.scale * c0.cosine, -q.scale};
      CosineGradient c1;
      if (!q.queue.empty()) {
        const DfqLogits lg = dfq_logits(hs[0], q);
        c1 = cosine_with_gradient(hs[0], q.queue[lg.best]);
        logits[1] = q.scale * c1.cosine;
      }
      const LossResult ce = cross_entropy(logits, dist);
      comp["dfq"] += inv_n * ce.value;
      if (need_grad) {
        const double w = opt.dfq_weight * inv_n * q.scale;
        for (std::size_t c = 0; c < f; ++c) {
          double d = ce.gradient[0] * c0.d_feature[c];
          if (!q.queue.empty()) d += ce.gradient[1] * c1.d_feature[c];
          dhs[0][c] += w * d;
        }
      }
    }

    if (need_grad && model.hidden_dim() > 0) {
      for (std::size_t k = 0; k < ne; ++k) {
        std::vector<double> dpre(f);
        for (std::size_t c = 0; c < f; ++c) dpre[c] = dhs[k][c] * (1.0 - hs[k][c] * hs[k][c]);
        affine_backward(P(ext_name(k, "weight")), x, dpre, G(ext_name(k, "weight")),
                        G(ext_name(k, "bias")), {});
      }
    }
  }

  switch (recipe) {
    case LossRecipe::plain: out.loss = comp["cls"]; break;
    case LossRecipe::ctel: out.loss = total_ctel(comp["cls"], comp["adv"]); break;
    case LossRecipe::hexianhua: out.loss = total_hexianhua(comp["cls"], comp["focal"]); break;
    case LossRecipe::opdai:
      out.loss = total_opdai(comp["focal1"], comp["focal2"], comp["focal3"]);
      break;
    case LossRecipe::chenyifan:
      out.loss = total_chenyifan(comp["ori"], comp["face"], comp["eyes"], comp["nose"],
                                 comp["chin"], comp["concat"]);
      break;
    case LossRecipe::ionetworks: out.loss = total_ionetworks(comp["bce"], comp["ang"]); break;
  }
  if (opt.dfq != nullptr) out.loss += opt.dfq_weight * comp["dfq"];
  return out;
}

}  // namespace

ForwardResult forward_backward(const TinyModel& model, const Batch& batch,
                               const ForwardOptions& options) {
  return run(model, batch, options, true);
}

ForwardResult evaluate_loss(const TinyModel& model, const Batch& batch,
                            const ForwardOptions& options) {
  return run(model, batch, options, false);
}

std::vector<double> mirror_feature(std::span<const double> x) { return {x.rbegin(), x.rend()}; }

std::vector<double> predict(const TinyModel& model, std::span<const std::vector<double>> features,
                            bool tta, std::array<double, 2> tta_weights) {
  std::vector<double> out;
  out.reserve(features.size());
  for (const auto& x : features) {
    const double s = model.score(x);
    if (!tta) {
      out.push_back(s);
      continue;
    }
    out.push_back(tta_flip_average(s, model.score(mirror_feature(x)), tta_weights));
  }
  return out;
}

OptimizerState OptimizerState::sgd(double lr, double momentum) {
  OptimizerState s;
  s.kind = OptimizerKind::sgd_momentum;
  s.lr = lr;
  s.momentum = momentum;
  return s;
}

OptimizerState OptimizerState::adamw(double lr, double weight_decay, double beta1, double beta2,
                                     double eps) {
  OptimizerState s;
  s.kind = OptimizerKind::adamw;
  s.lr = lr;
  s.weight_decay = weight_decay;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  return s;
}

namespace {

void check_shapes(OptimizerState& state, const std::vector<Param>& params, const Gradients& grads) {
  if (grads.size() != params.size()) throw ParameterError("one gradient per parameter");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].value.size()) throw ParameterError("gradient shape mismatch");
  }
  if (state.first.empty()) {
    for (const auto& p : params) {
      state.first.emplace_back(p.value.size(), 0.0);
      state.second.emplace_back(p.value.size(), 0.0);
    }
  }
  if (state.first.size() != params.size()) throw ParameterError("optimizer state shape mismatch");
}

}  // namespace

void sgd_momentum_step(OptimizerState& state, std::vector<Param>& params, const Gradients& grads) {
  check_shapes(state, params, grads);
  ++state.step;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].frozen) continue;
    auto& v = state.first[i];
    auto& p = params[i].value;
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = grads[i][j] + state.weight_decay * p[j];
      v[j] = state.momentum * v[j] + g;
      p[j] -= state.lr * v[j];
    }
  }
}

void adamw_step(OptimizerState& state, std::vector<Param>& params, const Gradients& grads) {
  check_shapes(state, params, grads);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].frozen) continue;
    auto& m = state.first[i];
    auto& v = state.second[i];
    auto& p = params[i].value;
    // Sub-centers live on the sphere; decay would only fight the renormalization.
    const double wd = params[i].role == ParamRole::sub_center ? 0.0 : state.weight_decay;
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = grads[i][j];
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      p[j] -= state.lr * wd * p[j];
      p[j] -= state.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + state.eps);
    }
  }
}

void optimizer_step(OptimizerState& state, std::vector<Param>& params, const Gradients& grads) {
  if (state.kind == OptimizerKind::sgd_momentum) {
    sgd_momentum_step(state, params, grads);
  } else {
    adamw_step(state, params, grads);
  }
}

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::sgd_momentum ? "sgd_momentum" : "adamw";
}

OptimizerKind optimizer_kind_from_string(std::string_view text) {
  if (text == "sgd_momentum" || text == "sgd") return OptimizerKind::sgd_momentum;
  if (text == "adamw") return OptimizerKind::adamw;
  throw ConfigError("unknown optimizer '" + std::string(text) + "'");
}

namespace {

std::string_view role_name(ParamRole r) {
  switch (r) {
    case ParamRole::extractor: return "extractor";
    case ParamRole::head: return "head";
    case ParamRole::sub_center: return "sub_center";
  }
  return "head";
}

}  // namespace

void to_json(nlohmann::json& j, const TinyModel& model) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : model.params()) {
    params.push_back({{"name", p.name},
                      {"rows", p.rows},
                      {"cols", p.cols},
                      {"role", role_name(p.role)},
                      {"frozen", p.frozen},
                      {"value", p.value}});
  }
  j = {{"recipe", to_string(model.recipe())},
       {"input_dim", model.input_dim()},
       {"hidden_dim", model.hidden_dim()},
       {"params", params}};
}

void from_json(const nlohmann::json& j, TinyModel& model) {
  const LossRecipe recipe = loss_recipe_from_string(j.at("recipe").get<std::string>());
  TinyModel m = TinyModel::zeros(recipe, j.at("input_dim").get<std::size_t>(),
                                 j.at("hidden_dim").get<std::size_t>());
  const auto& params = j.at("params");
  if (params.size() != m.params_.size()) throw ValidationError("checkpoint parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = m.params_[i];
    const auto& e = params[i];
    if (e.at("name").get<std::string>() != p.name || e.at("rows").get<std::size_t>() != p.rows ||
        e.at("cols").get<std::size_t>() != p.cols) {
      throw ValidationError("checkpoint parameter '" + p.name + "' does not match the architecture");
    }
    auto values = e.at("value").get<std::vector<double>>();
    if (values.size() != p.value.size()) throw ValidationError("checkpoint value size mismatch");
    p.value = std::move(values);
    p.frozen = e.value("frozen", false);
  }
  model = std::move(m);
}

}  // namespace padkit
