#include "padkit/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "padkit/error.hpp"

namespace padkit {

namespace {

// Products like 0.29 * 100 land a hair below the integer they denote.
constexpr double kCountSlack = 1e-9;

std::size_t floor_count(double rate, std::size_t n) {
  const double x = rate * static_cast<double>(n);
  return std::min(n, static_cast<std::size_t>(std::floor(x + kCountSlack)));
}

std::size_t ceil_count(double rate, std::size_t n) {
  if (n == 0 || !(rate > 0.0)) return 0;
  const double x = rate * static_cast<double>(n);
  const auto c = static_cast<std::size_t>(std::max(1.0, std::ceil(x - kCountSlack)));
  return std::min(n, c);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

PtsState pts_init(std::span<const LabeledId> samples, double initial_rate, double decay,
                  std::uint64_t seed) {
  if (!(initial_rate > 0.0 && initial_rate <= 1.0)) {
    throw ParameterError("PTS initial rate must be in (0,1]");
  }
  if (!(decay > 0.0 && decay <= 1.0)) throw ParameterError("PTS decay must be in (0,1]");
  PtsState state;
  state.rate = initial_rate;
  state.decay = decay;
  std::vector<std::string> bonafide, attack;
  for (const auto& s : samples) {
    if (!state.labels.emplace(s.id, s.label).second) {
      throw ValidationError("duplicate sample id '" + s.id + "'");
    }
    (s.label == Label::bonafide ? bonafide : attack).push_back(s.id);
  }
  if (bonafide.empty() || attack.empty()) {
    throw ValidationError("PTS needs samples of both classes");
  }
  std::mt19937_64 rng(seed);
  for (auto* pool : {&bonafide, &attack}) {
    std::shuffle(pool->begin(), pool->end(), rng);
    const std::size_t take = floor_count(initial_rate, pool->size());
    for (std::size_t i = 0; i < pool->size(); ++i) {
      (i < take ? state.train_ids : state.pending_ids).insert((*pool)[i]);
    }
  }
  return state;
}

PtsState pts_step(const PtsState& state, const std::map<std::string, double>& pending_scores) {
  if (pending_scores.size() != state.pending_ids.size()) {
    throw ValidationError("PTS scores must cover exactly the pending ids");
  }
  std::vector<std::pair<double, std::string>> positives, negatives;
  for (const auto& [id, score] : pending_scores) {
    if (!state.pending_ids.contains(id)) {
      throw ValidationError("PTS score for non-pending id '" + id + "'");
    }
    (state.labels.at(id) == Label::bonafide ? positives : negatives).emplace_back(score, id);
  }
  // Hard positives score low; hard negatives score high.
  std::sort(positives.begin(), positives.end());
  std::sort(negatives.begin(), negatives.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });

  PtsState next = state;
  next.last_moved.clear();
  for (auto* pool : {&positives, &negatives}) {
    const std::size_t take = ceil_count(state.rate, pool->size());
    for (std::size_t i = 0; i < take; ++i) {
      const std::string& id = (*pool)[i].second;
      next.pending_ids.erase(id);
      next.train_ids.insert(id);
      next.last_moved.push_back(id);
    }
  }
  next.rate = state.rate * state.decay;
  next.steps = state.steps + 1;
  return next;
}

std::vector<double> l2_normalize(std::span<const double> v) {
  const double n = std::sqrt(dot(v, v));
  if (!(n > 0.0)) throw ParameterError("cannot normalize a zero vector");
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

DfqState dfq_init(std::span<const double> initial_center, const DfqConfig& config) {
  if (config.capacity == 0) throw ParameterError("DFQ capacity must be positive");
  if (!(config.alpha >= -1.0 && config.alpha <= 1.0)) {
    throw ParameterError("DFQ alpha must be in [-1,1]");
  }
  DfqState s;
  s.center = l2_normalize(initial_center);
  s.center_sum = s.center;
  s.center_count = 1;
  s.capacity = config.capacity;
  s.alpha = config.alpha;
  s.scale = config.scale;
  return s;
}

DfqLogits dfq_logits(std::span<const double> feature, const DfqState& state) {
  if (feature.size() != state.center.size()) throw ParameterError("DFQ dimension mismatch");
  const std::vector<double> f = l2_normalize(feature);
  DfqLogits out;
  out.log0 = std::clamp(dot(f, state.center), -1.0, 1.0);
  out.log1 = -1.0;
  for (std::size_t i = 0; i < state.queue.size(); ++i) {
    const double c = std::clamp(dot(f, state.queue[i]), -1.0, 1.0);
    if (i == 0 || c > out.log1) {
      out.log1 = c;
      out.best = i;
    }
  }
  return out;
}

DfqState dfq_update(const DfqState& state, std::span<const double> feature, double log0) {
  if (!(log0 < state.alpha)) return state;
  DfqState next = state;
  next.queue.push_back(l2_normalize(feature));
  ++next.enqueued_total;
  while (next.queue.size() > next.capacity) next.queue.pop_front();
  return next;
}

DfqState dfq_update_center(const DfqState& state, std::span<const double> feature) {
  const std::vector<double> f = l2_normalize(feature);
  DfqState next = state;
  for (std::size_t i = 0; i < f.size(); ++i) next.center_sum[i] += f[i];
  ++next.center_count;
  if (std::sqrt(dot(next.center_sum, next.center_sum)) > 0.0) {
    next.center = l2_normalize(next.center_sum);
  }
  return next;
}

LrSchedule LrSchedule::constant(double lr) {
  LrSchedule s;
  s.kind = ScheduleKind::constant;
  s.lr0 = lr;
  return s;
}

LrSchedule LrSchedule::cosine_warmup(double lr0, std::size_t warmup, std::size_t total,
                                     double floor_ratio) {
  LrSchedule s;
  s.kind = ScheduleKind::cosine_warmup;
  s.lr0 = lr0;
  s.warmup_epochs = warmup;
  s.total_epochs = total;
  s.floor_ratio = floor_ratio;
  return s;
}

LrSchedule LrSchedule::cyclic(double low, double high, std::size_t half_period) {
  LrSchedule s;
  s.kind = ScheduleKind::cyclic;
  s.lr0 = high;
  s.cyclic_low = low;
  s.cyclic_high = high;
  s.half_period = half_period;
  return s;
}

LrSchedule LrSchedule::step_decay(double lr0, double factor, std::size_t every) {
  LrSchedule s;
  s.kind = ScheduleKind::step_decay;
  s.lr0 = lr0;
  s.step_factor = factor;
  s.step_every = every;
  return s;
}

LrSchedule LrSchedule::cosine_annealing(double lr0, std::size_t t_max, double eta_min) {
  LrSchedule s;
  s.kind = ScheduleKind::cosine_annealing;
  s.lr0 = lr0;
  s.t_max = t_max;
  s.eta_min = eta_min;
  return s;
}

LrSchedule LrSchedule::cosine_restart(double lr0, std::size_t cycle, double cycle_decay) {
  LrSchedule s;
  s.kind = ScheduleKind::cosine_restart;
  s.lr0 = lr0;
  s.t_max = cycle;
  s.cycle_decay = cycle_decay;
  return s;
}

double lr_at(const LrSchedule& s, std::size_t epoch) {
  const double e = static_cast<double>(epoch);
  const double pi = std::numbers::pi;
  switch (s.kind) {
    case ScheduleKind::constant:
      return s.lr0;
    case ScheduleKind::cosine_warmup: {
      if (s.total_epochs == 0 || s.warmup_epochs >= s.total_epochs) {
        throw ParameterError("cosine warmup needs total_epochs > warmup_epochs");
      }
      const double floor = s.floor_ratio * s.lr0;
      if (epoch < s.warmup_epochs) {
        return s.lr0 * (e + 1.0) / static_cast<double>(s.warmup_epochs + 1);
      }
      const std::size_t last = s.total_epochs - 1;
      if (epoch >= last) return floor;
      const double progress = static_cast<double>(epoch - s.warmup_epochs) /
                              static_cast<double>(last - s.warmup_epochs);
      return floor + (s.lr0 - floor) * 0.5 * (1.0 + std::cos(pi * progress));
    }
    case ScheduleKind::cyclic: {
      if (s.half_period == 0) throw ParameterError("cyclic half period must be positive");
      const std::size_t pos = epoch % (2 * s.half_period);
      const double x = std::abs(static_cast<double>(pos) / static_cast<double>(s.half_period) - 1.0);
      return s.cyclic_low * x + s.cyclic_high * (1.0 - x);
    }
    case ScheduleKind::step_decay: {
      if (s.step_every == 0) throw ParameterError("step decay interval must be positive");
      return s.lr0 * std::pow(s.step_factor, static_cast<double>(epoch / s.step_every));
    }
    case ScheduleKind::cosine_annealing: {
      if (s.t_max == 0) throw ParameterError("cosine annealing needs t_max > 0");
      if (epoch >= s.t_max) return s.eta_min;
      return s.eta_min +
             (s.lr0 - s.eta_min) * 0.5 * (1.0 + std::cos(pi * e / static_cast<double>(s.t_max)));
    }
    case ScheduleKind::cosine_restart: {
      if (s.t_max == 0) throw ParameterError("cosine restart needs a positive cycle");
      const std::size_t cycle = epoch / s.t_max;
      const double peak = s.lr0 * std::pow(s.cycle_decay, static_cast<double>(cycle));
      const double pos = static_cast<double>(epoch % s.t_max) / static_cast<double>(s.t_max);
      return s.eta_min + (peak - s.eta_min) * 0.5 * (1.0 + std::cos(pi * pos));
    }
  }
  return s.lr0;
}

std::vector<double> ema_update(std::span<const double> ema, std::span<const double> params,
                               double decay) {
  if (ema.size() != params.size()) throw ParameterError("EMA shape mismatch");
  if (!(decay >= 0.0 && decay < 1.0)) throw ParameterError("EMA decay must be in [0,1)");
  std::vector<double> out(ema.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = decay * ema[i] + (1.0 - decay) * params[i];
  }
  return out;
}

bool early_stop(std::span<const double> history, std::size_t patience) {
  if (history.size() <= patience) return false;
  const std::size_t split = history.size() - patience;
  const double best_before = *std::min_element(history.begin(), history.begin() + split);
  double recent = std::numeric_limits<double>::infinity();
  for (std::size_t i = split; i < history.size(); ++i) recent = std::min(recent, history[i]);
  return !(recent < best_before);
}

std::string_view to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::constant: return "constant";
    case ScheduleKind::cosine_warmup: return "cosine_warmup";
    case ScheduleKind::cyclic: return "cyclic";
    case ScheduleKind::step_decay: return "step_decay";
    case ScheduleKind::cosine_annealing: return "cosine_annealing";
    case ScheduleKind::cosine_restart: return "cosine_restart";
  }
  return "?";
}

ScheduleKind schedule_kind_from_string(std::string_view text) {
  for (auto k : {ScheduleKind::constant, ScheduleKind::cosine_warmup, ScheduleKind::cyclic,
                 ScheduleKind::step_decay, ScheduleKind::cosine_annealing,
                 ScheduleKind::cosine_restart}) {
    if (to_string(k) == text) return k;
  }
  throw ConfigError("unknown schedule kind '" + std::string(text) + "'");
}

void to_json(nlohmann::json& j, const PtsState& s) {
  nlohmann::json labels = nlohmann::json::object();
  for (const auto& [id, label] : s.labels) labels[id] = to_string(label);
  j = {{"labels", labels},         {"train_ids", s.train_ids}, {"pending_ids", s.pending_ids},
       {"rate", s.rate},           {"decay", s.decay},         {"steps", s.steps},
       {"last_moved", s.last_moved}};
}

void from_json(const nlohmann::json& j, PtsState& s) {
  s.labels.clear();
  for (const auto& [id, label] : j.at("labels").items()) {
    s.labels[id] = label_from_string(label.get<std::string>());
  }
  j.at("train_ids").get_to(s.train_ids);
  j.at("pending_ids").get_to(s.pending_ids);
  j.at("rate").get_to(s.rate);
  j.at("decay").get_to(s.decay);
  j.at("steps").get_to(s.steps);
  j.at("last_moved").get_to(s.last_moved);
}

void to_json(nlohmann::json& j, const DfqConfig& c) {
  j = {{"capacity", c.capacity}, {"alpha", c.alpha}, {"scale", c.scale}};
}

void from_json(const nlohmann::json& j, DfqConfig& c) {
  const DfqConfig d;
  c.capacity = j.value("capacity", d.capacity);
  c.alpha = j.value("alpha", d.alpha);
  c.scale = j.value("scale", d.scale);
}

void to_json(nlohmann::json& j, const DfqState& s) {
  j = {{"center", s.center},
       {"queue", std::vector<std::vector<double>>(s.queue.begin(), s.queue.end())},
       {"capacity", s.capacity},
       {"alpha", s.alpha},
       {"scale", s.scale},
       {"center_sum", s.center_sum},
       {"center_count", s.center_count},
       {"enqueued_total", s.enqueued_total}};
}

void from_json(const nlohmann::json& j, DfqState& s) {
  j.at("center").get_to(s.center);
  const auto q = j.at("queue").get<std::vector<std::vector<double>>>();
  s.queue.assign(q.begin(), q.end());
  j.at("capacity").get_to(s.capacity);
  j.at("alpha").get_to(s.alpha);
  j.at("scale").get_to(s.scale);
  j.at("center_sum").get_to(s.center_sum);
  j.at("center_count").get_to(s.center_count);
  j.at("enqueued_total").get_to(s.enqueued_total);
}

void to_json(nlohmann::json& j, const LrSchedule& s) {
  j = {{"kind", to_string(s.kind)},
       {"lr0", s.lr0},
       {"warmup_epochs", s.warmup_epochs},
       {"total_epochs", s.total_epochs},
       {"floor_ratio", s.floor_ratio},
       {"cyclic_low", s.cyclic_low},
       {"cyclic_high", s.cyclic_high},
       {"half_period", s.half_period},
       {"step_factor", s.step_factor},
       {"step_every", s.step_every},
       {"t_max", s.t_max},
       {"eta_min", s.eta_min},
       {"cycle_decay", s.cycle_decay}};
}

void from_json(const nlohmann::json& j, LrSchedule& s) {
  const LrSchedule d;
  s.kind = schedule_kind_from_string(j.value("kind", std::string("constant")));
  s.lr0 = j.value("lr0", d.lr0);
  s.warmup_epochs = j.value("warmup_epochs", d.warmup_epochs);
  s.total_epochs = j.value("total_epochs", d.total_epochs);
  s.floor_ratio = j.value("floor_ratio", d.floor_ratio);
  s.cyclic_low = j.value("cyclic_low", d.cyclic_low);
  s.cyclic_high = j.value("cyclic_high", d.cyclic_high);
  s.half_period = j.value("half_period", d.half_period);
  s.step_factor = j.value("step_factor", d.step_factor);
  s.step_every = j.value("step_every", d.step_every);
  s.t_max = j.value("t_max", d.t_max);
  s.eta_min = j.value("eta_min", d.eta_min);
  s.cycle_decay = j.value("cycle_decay", d.cycle_decay);
}

}  // namespace padkit
