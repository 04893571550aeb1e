#include "padkit/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <set>
#include <unordered_map>

#include "padkit/error.hpp"
#include "padkit/losses.hpp"
#include "padkit/preprocess.hpp"

namespace padkit {

namespace {

double label_target(Label l) { return l == Label::bonafide ? 1.0 : 0.0; }

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

class Session {
 public:
  Session(const TrainConfig& cfg, const TrainData& data)
      : cfg_(cfg),
        data_(data),
        model_(TinyModel::create(cfg.recipe, data.validate(), cfg.hidden_dim, cfg.seed)),
        rng_(cfg.seed ^ 0x9e3779b97f4a7c15ULL) {
    const auto& o = cfg.optimizer;
    opt_ = o.kind == OptimizerKind::sgd_momentum
               ? OptimizerState::sgd(cfg.schedule.lr0, o.momentum)
               : OptimizerState::adamw(cfg.schedule.lr0, o.weight_decay, o.beta1, o.beta2, o.eps);
    if (o.kind == OptimizerKind::sgd_momentum) opt_.weight_decay = o.weight_decay;
    for (std::size_t i = 0; i < data.train.size(); ++i) index_.emplace(data.train[i].sample_id, i);
    if (cfg.ema.enabled) ema_ = model_.flat();
    if (cfg.pts.enabled) {
      std::vector<LabeledId> ids;
      for (const auto& s : data.train) ids.push_back({s.sample_id, s.label});
      pts_ = pts_init(ids, cfg.pts.initial_rate, cfg.pts.decay, cfg.seed);
    }
    if (cfg.dfq.enabled) {
      std::vector<double> center(model_.feature_dim(), 0.0);
      for (const auto& s : data.train) {
        if (s.label != Label::attack) continue;
        const auto h = l2_normalize(model_.extract(*s.feature, 0));
        for (std::size_t c = 0; c < h.size(); ++c) center[c] += h[c];
      }
      dfq_ = dfq_init(center, cfg.dfq.queue);
    }
    for (std::size_t i = 0; i < data.dev.size(); ++i) dev_order_.push_back(i);
    std::shuffle(dev_order_.begin(), dev_order_.end(), rng_);
  }

  TinyModel& model() { return model_; }

  TinyModel eval_model() const {
    if (!ema_) return model_;
    TinyModel m = model_;
    m.set_flat(*ema_);
    m.renormalize();
    return m;
  }

  EpochRecord run_epoch(std::size_t stage, std::size_t epoch, std::size_t batch_size) {
    EpochRecord rec;
    rec.stage = stage;
    rec.epoch = epoch;
    rec.lr = lr_at(cfg_.schedule, epoch);
    rec.batch_size = batch_size;
    rec.pts_rate = pts_ ? pts_->rate : 1.0;
    opt_.lr = rec.lr;

    std::vector<std::size_t> order = active_indices(epoch);
    rec.train_size = order.size();
    std::shuffle(order.begin(), order.end(), rng_);

    ForwardOptions fopt;
    fopt.grl_lambda = cfg_.grl_lambda;
    fopt.focal_gamma = cfg_.focal_gamma;
    fopt.dfq_weight = cfg_.dfq.weight;

    double seen = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t end = std::min(order.size(), start + batch_size);
      const Batch batch = make_batch(order, start, end);
      fopt.dfq = dfq_ ? &*dfq_ : nullptr;
      const ForwardResult fb = forward_backward(model_, batch, fopt);
      optimizer_step(opt_, model_.params(), fb.grads);
      model_.renormalize();
      if (ema_) *ema_ = ema_update(*ema_, model_.flat(), cfg_.ema.decay);
      if (dfq_) {
        for (std::size_t k = start; k < end; ++k) {
          const auto& s = data_.train[order[k]];
          if (s.label != Label::attack) continue;
          const auto h = model_.extract(*s.feature, 0);
          const DfqLogits lg = dfq_logits(h, *dfq_);
          dfq_ = dfq_update(*dfq_, h, lg.log0);
          dfq_ = dfq_update_center(*dfq_, h);
        }
      }
      const double w = static_cast<double>(end - start);
      seen += w;
      rec.loss += w * fb.loss;
      for (const auto& [name, v] : fb.components) rec.components[name] += w * v;
    }
    rec.loss /= seen;
    for (auto& [name, v] : rec.components) v /= seen;
    rec.dfq_queue = dfq_ ? dfq_->queue.size() : 0;

    const TinyModel eval = eval_model();
    evaluate_dev(eval, rec);
    if (pts_ && !pts_->pending_ids.empty()) {
      std::map<std::string, double> pending;
      for (const auto& id : pts_->pending_ids) {
        pending[id] = eval.score(*data_.train[index_.at(id)].feature);
      }
      pts_ = pts_step(*pts_, pending);
    }
    return rec;
  }

  std::optional<PtsState> pts() const { return pts_; }
  std::optional<DfqState> dfq() const { return dfq_; }

 private:
  std::vector<std::size_t> active_indices(std::size_t epoch) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < data_.train.size(); ++i) {
      if (!pts_ || pts_->train_ids.contains(data_.train[i].sample_id)) idx.push_back(i);
    }
    if (!cfg_.max_upsample) return idx;
    std::vector<LabeledId> ids;
    for (auto i : idx) ids.push_back({data_.train[i].sample_id, data_.train[i].label});
    std::vector<std::size_t> out;
    for (const auto& l : max_upsample(ids, cfg_.seed + epoch)) out.push_back(index_.at(l.id));
    return out;
  }

  Batch make_batch(const std::vector<std::size_t>& order, std::size_t start, std::size_t end) {
    Batch batch;
    for (std::size_t k = start; k < end; ++k) {
      const auto& s = data_.train[order[k]];
      double t = label_target(s.label);
      if (cfg_.label_smoothing > 0.0) {
        const std::array<double, 2> y{1.0 - t, t};
        t = label_smoothing(y, cfg_.label_smoothing)[1];
      }
      batch.add(*s.feature, t, Domain::train_band);
    }
    if (cfg_.mixup_alpha > 0.0 && batch.size() > 1) {
      std::vector<std::size_t> partner(batch.size());
      for (std::size_t i = 0; i < partner.size(); ++i) partner[i] = i;
      std::shuffle(partner.begin(), partner.end(), rng_);
      const double lambda = sample_beta(cfg_.mixup_alpha, cfg_.mixup_alpha, rng_);
      Batch mixed;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const std::size_t j = partner[i];
        const std::array<double, 1> yi{batch.targets[i]};
        const std::array<double, 1> yj{batch.targets[j]};
        MixupResult m = mixup_with_lambda(batch.features[i], yi, batch.features[j], yj, lambda);
        mixed.add(std::move(m.x), std::clamp(m.y[0], 0.0, 1.0), Domain::train_band);
      }
      batch = std::move(mixed);
    }
    if (cfg_.recipe == LossRecipe::ctel && !dev_order_.empty()) {
      const std::size_t n = end - start;
      for (std::size_t k = 0; k < n; ++k) {
        const auto& s = data_.dev[dev_order_[dev_cursor_]];
        dev_cursor_ = (dev_cursor_ + 1) % dev_order_.size();
        // The target is unused for dev-band rows: only the domain head sees them.
        batch.add(*s.feature, 0.0, Domain::dev_band);
      }
    }
    return batch;
  }

  void evaluate_dev(const TinyModel& eval, EpochRecord& rec) const {
    std::vector<std::vector<double>> features;
    std::vector<Label> labels;
    for (const auto& s : data_.dev) {
      features.push_back(*s.feature);
      labels.push_back(s.label);
    }
    const auto scores = predict(eval, features, cfg_.tta);
    double loss = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      loss += bce(scores[i], label_target(labels[i])).value;
    }
    rec.dev_loss = loss / static_cast<double>(scores.size());
    rec.dev_auc = auc(scores, labels);
    rec.dev_eer = eer_threshold(scores, labels).eer;
  }

  const TrainConfig& cfg_;
  const TrainData& data_;
  TinyModel model_;
  std::mt19937_64 rng_;
  OptimizerState opt_;
  std::unordered_map<std::string, std::size_t> index_;
  std::optional<std::vector<double>> ema_;
  std::optional<PtsState> pts_;
  std::optional<DfqState> dfq_;
  std::vector<std::size_t> dev_order_;
  std::size_t dev_cursor_ = 0;
};

}  // namespace

void TrainConfig::validate() const {
  require(epochs > 0, "epochs must be positive");
  require(batch_size > 0, "batch_size must be positive");
  require(schedule.lr0 > 0.0 || schedule.kind == ScheduleKind::cyclic, "schedule lr0 must be positive");
  require(grl_lambda >= 0.0, "grl_lambda must be nonnegative");
  require(focal_gamma >= 0.0, "focal_gamma must be nonnegative");
  require(mixup_alpha >= 0.0, "mixup_alpha must be nonnegative");
  require(label_smoothing >= 0.0 && label_smoothing < 1.0, "label_smoothing must be in [0,1)");
  require(!pts.enabled || (pts.initial_rate > 0.0 && pts.initial_rate <= 1.0),
          "pts.initial_rate must be in (0,1]");
  require(!pts.enabled || (pts.decay > 0.0 && pts.decay <= 1.0), "pts.decay must be in (0,1]");
  require(!dfq.enabled || dfq.queue.capacity > 0, "dfq.capacity must be positive");
  require(!dfq.enabled || dfq.weight >= 0.0, "dfq.weight must be nonnegative");
  require(!ema.enabled || (ema.decay >= 0.0 && ema.decay < 1.0), "ema.decay must be in [0,1)");
  require(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0, "optimizer.momentum must be in [0,1)");
  require(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0, "optimizer.beta1 must be in [0,1)");
  require(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0, "optimizer.beta2 must be in [0,1)");
  require(optimizer.eps > 0.0, "optimizer.eps must be positive");
  require(optimizer.weight_decay >= 0.0, "optimizer.weight_decay must be nonnegative");
  require(two_stage.stage1_batch > 0 && two_stage.stage2_batch > 0,
          "two_stage batch sizes must be positive");
  require(two_stage.stage2_max_epochs > 0, "two_stage.stage2_max_epochs must be positive");
  require(two_stage.loss_threshold > 0.0, "two_stage.loss_threshold must be positive");
}

TrainData TrainData::from_protocol(std::span<const SampleRecord> catalog,
                                   const ProtocolManifest& manifest) {
  std::unordered_map<std::string, const SampleRecord*> by_id;
  for (const auto& s : catalog) {
    if (!by_id.emplace(s.sample_id, &s).second) {
      throw ValidationError("duplicate sample id '" + s.sample_id + "' in catalog");
    }
  }
  auto collect = [&](const std::vector<std::string>& ids) {
    std::vector<SampleRecord> out;
    for (const auto& id : ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw ValidationError("manifest id '" + id + "' not in catalog");
      out.push_back(*it->second);
    }
    return out;
  };
  return {collect(manifest.train_ids), collect(manifest.dev_ids)};
}

std::size_t TrainData::validate() const {
  std::size_t dim = 0;
  for (const auto* split : {&train, &dev}) {
    const char* name = split == &train ? "train" : "dev";
    bool has_bona = false, has_attack = false;
    for (const auto& s : *split) {
      if (!s.feature) throw ValidationError("sample '" + s.sample_id + "' has no feature vector");
      if (dim == 0) dim = s.feature->size();
      if (s.feature->size() != dim || dim == 0) {
        throw ValidationError("sample '" + s.sample_id + "' has feature dimension " +
                              std::to_string(s.feature->size()) + ", expected " +
                              std::to_string(dim));
      }
      for (double v : *s.feature) {
        if (!std::isfinite(v)) throw ValidationError("sample '" + s.sample_id + "' has a non-finite feature");
      }
      (s.label == Label::bonafide ? has_bona : has_attack) = true;
    }
    if (!has_bona || !has_attack) {
      throw ValidationError(std::string(name) + " split needs both bona fide and attack samples");
    }
  }
  return dim;
}

TrainResult train(const TrainConfig& config, const TrainData& data) {
  config.validate();
  Session session(config, data);
  TrainResult result{session.model(), {}, false, std::nullopt, std::nullopt};
  std::vector<double> dev_losses;
  for (std::size_t e = 0; e < config.epochs; ++e) {
    result.history.push_back(session.run_epoch(0, e, config.batch_size));
    dev_losses.push_back(result.history.back().dev_loss);
    if (config.early_stopping_patience > 0 && early_stop(dev_losses, config.early_stopping_patience)) {
      result.early_stopped = true;
      break;
    }
  }
  result.model = session.eval_model();
  result.pts = session.pts();
  result.dfq = session.dfq();
  return result;
}

TwoStageResult two_stage_train(const TrainConfig& config, const TrainData& data) {
  config.validate();
  Session session(config, data);
  TwoStageResult result{session.model(), session.model(), {}, {}, false};
  session.model().set_extractors_frozen(true);
  std::size_t epoch = 0;
  for (std::size_t e = 0; e < config.two_stage.stage1_epochs; ++e) {
    result.stage1.push_back(session.run_epoch(1, epoch++, config.two_stage.stage1_batch));
  }
  result.after_stage1 = session.model();
  session.model().set_extractors_frozen(false);
  for (std::size_t e = 0; e < config.two_stage.stage2_max_epochs; ++e) {
    result.stage2.push_back(session.run_epoch(2, epoch++, config.two_stage.stage2_batch));
    if (result.stage2.back().loss < config.two_stage.loss_threshold) {
      result.threshold_met = true;
      break;
    }
  }
  result.model = session.eval_model();
  return result;
}

std::vector<ScoredSample> score_samples(const TinyModel& model,
                                        std::span<const SampleRecord> samples, bool tta) {
  std::vector<std::vector<double>> features;
  for (const auto& s : samples) {
    if (!s.feature) throw ValidationError("sample '" + s.sample_id + "' has no feature vector");
    features.push_back(*s.feature);
  }
  const auto scores = predict(model, features, tta);
  std::vector<ScoredSample> out;
  for (std::size_t i = 0; i < samples.size(); ++i) out.push_back({samples[i].sample_id, scores[i]});
  return out;
}

std::vector<double> smoothed_loss(std::span<const EpochRecord> history, std::size_t window) {
  if (window == 0) throw ParameterError("smoothing window must be positive");
  std::vector<double> out;
  if (history.size() < window) return out;
  for (std::size_t i = 0; i + window <= history.size(); ++i) {
    double s = 0.0;
    for (std::size_t k = i; k < i + window; ++k) s += history[k].loss;
    out.push_back(s / static_cast<double>(window));
  }
  return out;
}

namespace {

void reject_unknown(const nlohmann::json& j, std::initializer_list<std::string_view> keys,
                    std::string_view where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
      throw ConfigError("unknown key '" + k + "' in " + std::string(where));
    }
  }
}

}  // namespace

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"recipe", to_string(c.recipe)},
       {"hidden_dim", c.hidden_dim},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"seed", c.seed},
       {"schedule", c.schedule},
       {"optimizer",
        {{"kind", to_string(c.optimizer.kind)},
         {"momentum", c.optimizer.momentum},
         {"weight_decay", c.optimizer.weight_decay},
         {"beta1", c.optimizer.beta1},
         {"beta2", c.optimizer.beta2},
         {"eps", c.optimizer.eps}}},
       {"grl_lambda", c.grl_lambda},
       {"focal_gamma", c.focal_gamma},
       {"early_stopping_patience", c.early_stopping_patience},
       {"strategy",
        {{"pts",
          {{"enabled", c.pts.enabled}, {"initial_rate", c.pts.initial_rate}, {"decay", c.pts.decay}}},
         {"dfq",
          {{"enabled", c.dfq.enabled},
           {"capacity", c.dfq.queue.capacity},
           {"alpha", c.dfq.queue.alpha},
           {"scale", c.dfq.queue.scale},
           {"weight", c.dfq.weight}}},
         {"ema", {{"enabled", c.ema.enabled}, {"decay", c.ema.decay}}},
         {"mixup_alpha", c.mixup_alpha},
         {"label_smoothing", c.label_smoothing},
         {"max_upsample", c.max_upsample},
         {"tta", c.tta}}},
       {"two_stage",
        {{"stage1_batch", c.two_stage.stage1_batch},
         {"stage2_batch", c.two_stage.stage2_batch},
         {"stage1_epochs", c.two_stage.stage1_epochs},
         {"stage2_max_epochs", c.two_stage.stage2_max_epochs},
         {"loss_threshold", c.two_stage.loss_threshold}}}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  try {
    reject_unknown(j,
                   {"recipe", "hidden_dim", "epochs", "batch_size", "seed", "schedule", "optimizer",
                    "grl_lambda", "focal_gamma", "early_stopping_patience", "strategy", "two_stage"},
                   "train config");
    const TrainConfig d;
    c = d;
    if (j.contains("recipe")) c.recipe = loss_recipe_from_string(j["recipe"].get<std::string>());
    c.hidden_dim = j.value("hidden_dim", d.hidden_dim);
    c.epochs = j.value("epochs", d.epochs);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.seed = j.value("seed", d.seed);
    if (j.contains("schedule")) j["schedule"].get_to(c.schedule);
    c.grl_lambda = j.value("grl_lambda", d.grl_lambda);
    c.focal_gamma = j.value("focal_gamma", d.focal_gamma);
    c.early_stopping_patience = j.value("early_stopping_patience", d.early_stopping_patience);
    if (j.contains("optimizer")) {
      const auto& o = j["optimizer"];
      reject_unknown(o, {"kind", "momentum", "weight_decay", "beta1", "beta2", "eps"}, "optimizer");
      if (o.contains("kind")) c.optimizer.kind = optimizer_kind_from_string(o["kind"].get<std::string>());
      c.optimizer.momentum = o.value("momentum", d.optimizer.momentum);
      c.optimizer.weight_decay = o.value("weight_decay", d.optimizer.weight_decay);
      c.optimizer.beta1 = o.value("beta1", d.optimizer.beta1);
      c.optimizer.beta2 = o.value("beta2", d.optimizer.beta2);
      c.optimizer.eps = o.value("eps", d.optimizer.eps);
    }
    if (j.contains("strategy")) {
      const auto& s = j["strategy"];
      reject_unknown(s, {"pts", "dfq", "ema", "mixup_alpha", "label_smoothing", "max_upsample", "tta"},
                     "strategy");
      if (s.contains("pts")) {
        const auto& p = s["pts"];
        reject_unknown(p, {"enabled", "initial_rate", "decay"}, "strategy.pts");
        c.pts.enabled = p.value("enabled", true);
        c.pts.initial_rate = p.value("initial_rate", d.pts.initial_rate);
        c.pts.decay = p.value("decay", d.pts.decay);
      }
      if (s.contains("dfq")) {
        const auto& q = s["dfq"];
        reject_unknown(q, {"enabled", "capacity", "alpha", "scale", "weight"}, "strategy.dfq");
        c.dfq.enabled = q.value("enabled", true);
        c.dfq.queue.capacity = q.value("capacity", d.dfq.queue.capacity);
        c.dfq.queue.alpha = q.value("alpha", d.dfq.queue.alpha);
        c.dfq.queue.scale = q.value("scale", d.dfq.queue.scale);
        c.dfq.weight = q.value("weight", d.dfq.weight);
      }
      if (s.contains("ema")) {
        const auto& e = s["ema"];
        reject_unknown(e, {"enabled", "decay"}, "strategy.ema");
        c.ema.enabled = e.value("enabled", true);
        c.ema.decay = e.value("decay", d.ema.decay);
      }
      c.mixup_alpha = s.value("mixup_alpha", d.mixup_alpha);
      c.label_smoothing = s.value("label_smoothing", d.label_smoothing);
      c.max_upsample = s.value("max_upsample", d.max_upsample);
      c.tta = s.value("tta", d.tta);
    }
    if (j.contains("two_stage")) {
      const auto& t = j["two_stage"];
      reject_unknown(t,
                     {"stage1_batch", "stage2_batch", "stage1_epochs", "stage2_max_epochs",
                      "loss_threshold"},
                     "two_stage");
      c.two_stage.stage1_batch = t.value("stage1_batch", d.two_stage.stage1_batch);
      c.two_stage.stage2_batch = t.value("stage2_batch", d.two_stage.stage2_batch);
      c.two_stage.stage1_epochs = t.value("stage1_epochs", d.two_stage.stage1_epochs);
      c.two_stage.stage2_max_epochs = t.value("stage2_max_epochs", d.two_stage.stage2_max_epochs);
      c.two_stage.loss_threshold = t.value("loss_threshold", d.two_stage.loss_threshold);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed train config: ") + e.what());
  }
}

void to_json(nlohmann::json& j, const EpochRecord& r) {
  j = {{"stage", r.stage},         {"epoch", r.epoch},         {"lr", r.lr},
       {"loss", r.loss},           {"components", r.components}, {"dev_loss", r.dev_loss},
       {"dev_auc", r.dev_auc},     {"dev_eer", r.dev_eer},     {"pts_rate", r.pts_rate},
       {"train_size", r.train_size}, {"dfq_queue", r.dfq_queue}, {"batch_size", r.batch_size}};
}

void from_json(const nlohmann::json& j, EpochRecord& r) {
  j.at("stage").get_to(r.stage);
  j.at("epoch").get_to(r.epoch);
  j.at("lr").get_to(r.lr);
  j.at("loss").get_to(r.loss);
  j.at("components").get_to(r.components);
  j.at("dev_loss").get_to(r.dev_loss);
  j.at("dev_auc").get_to(r.dev_auc);
  j.at("dev_eer").get_to(r.dev_eer);
  j.at("pts_rate").get_to(r.pts_rate);
  j.at("train_size").get_to(r.train_size);
  j.at("dfq_queue").get_to(r.dfq_queue);
  j.at("batch_size").get_to(r.batch_size);
}

void write_history(std::ostream& out, std::span<const EpochRecord> history) {
  for (const auto& r : history) out << nlohmann::json(r).dump() << '\n';
}

}  // namespace padkit
