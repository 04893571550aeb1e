#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "padkit/error.hpp"
#include "padkit/strategies.hpp"

using namespace padkit;

namespace {

std::vector<LabeledId> pool(std::size_t n_bona, std::size_t n_attack) {
  std::vector<LabeledId> out;
  for (std::size_t i = 0; i < n_bona; ++i) out.push_back({"b" + std::to_string(i), Label::bonafide});
  for (std::size_t i = 0; i < n_attack; ++i) out.push_back({"a" + std::to_string(i), Label::attack});
  return out;
}

std::size_t count_label(const PtsState& s, const std::set<std::string>& ids, Label l) {
  std::size_t n = 0;
  for (const auto& id : ids) n += s.labels.at(id) == l;
  return n;
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] * b[i];
  return d / (norm(a) * norm(b));
}

}  // namespace

TEST_CASE("pts initial selection") {
  const auto ids = pool(100, 100);
  const PtsState s = pts_init(ids, 0.1, 0.9, 3);
  CHECK(count_label(s, s.train_ids, Label::bonafide) == 10);
  CHECK(count_label(s, s.train_ids, Label::attack) == 10);
  CHECK(s.pending_ids.size() == 180);
  CHECK(pts_init(ids, 0.1, 0.9, 3) == s);
  CHECK(pts_init(ids, 0.1, 0.9, 4).train_ids != s.train_ids);
  CHECK(pts_init(ids, 1.0, 0.9, 3).pending_ids.empty());
  CHECK_THROWS_AS(pts_init(pool(3, 0), 0.5, 0.9, 1), ValidationError);
  CHECK_THROWS_AS(pts_init(ids, 0.0, 0.9, 1), ParameterError);
}

TEST_CASE("pts moves the lowest scoring positives") {
  PtsState s;
  s.labels = {{"p0", Label::bonafide}, {"p1", Label::bonafide}, {"p2", Label::bonafide},
              {"p3", Label::bonafide}, {"n0", Label::attack}};
  s.train_ids = {"n0"};
  s.pending_ids = {"p0", "p1", "p2", "p3"};
  s.rate = 0.5;
  s.decay = 1.0;
  const PtsState next = pts_step(s, {{"p0", 0.9}, {"p1", 0.2}, {"p2", 0.8}, {"p3", 0.1}});
  CHECK(next.last_moved == std::vector<std::string>{"p3", "p1"});
  CHECK(next.pending_ids == std::set<std::string>{"p0", "p2"});
  CHECK(next.rate == 0.5);
}

TEST_CASE("pts moves the highest scoring negatives and rejects bad score maps") {
  PtsState s = pts_init(pool(2, 6), 0.5, 0.5, 1);
  std::map<std::string, double> scores;
  double v = 0.0;
  for (const auto& id : s.pending_ids) scores[id] = (v += 0.1);
  const PtsState next = pts_step(s, scores);
  std::vector<std::pair<double, std::string>> neg;
  for (const auto& [id, sc] : scores)
    if (s.labels.at(id) == Label::attack) neg.emplace_back(-sc, id);
  std::sort(neg.begin(), neg.end());
  // ceil(0.5 * 3) = 2 negatives, 1 positive.
  CHECK(next.last_moved.size() == 3);
  CHECK(next.last_moved[1] == neg[0].second);
  CHECK(next.last_moved[2] == neg[1].second);
  CHECK(next.rate == 0.25);

  scores.erase(scores.begin());
  CHECK_THROWS_AS(pts_step(s, scores), ValidationError);
  scores["not-pending"] = 0.5;
  CHECK_THROWS_AS(pts_step(s, scores), ValidationError);
}

TEST_CASE("pts drains pending and keeps the partition") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    const auto ids = pool(5 + rep, 3 + 2 * rep);
    PtsState s = pts_init(ids, 0.2, 0.7, rep);
    std::size_t steps = 0;
    while (!s.pending_ids.empty()) {
      std::map<std::string, double> sc;
      for (const auto& id : s.pending_ids) sc[id] = u(rng);
      s = pts_step(s, sc);
      REQUIRE(++steps < 1000);
      std::set<std::string> all = s.train_ids;
      for (const auto& id : s.pending_ids) CHECK(all.insert(id).second);
      CHECK(all.size() == ids.size());
    }
  }
}

TEST_CASE("pts rate follows the decay law") {
  PtsState s = pts_init(pool(50, 50), 0.3, 0.9, 2);
  for (int k = 0; k < 10 && !s.pending_ids.empty(); ++k) {
    CHECK(std::abs(s.rate - 0.3 * std::pow(0.9, k)) < 1e-12);
    std::map<std::string, double> sc;
    for (const auto& id : s.pending_ids) sc[id] = 0.5;
    s = pts_step(s, sc);
  }
  PtsState flat = pts_init(pool(50, 50), 0.3, 1.0, 2);
  for (int k = 0; k < 3; ++k) {
    std::map<std::string, double> sc;
    for (const auto& id : flat.pending_ids) sc[id] = 0.5;
    flat = pts_step(flat, sc);
    CHECK(flat.rate == 0.3);
  }
}

TEST_CASE("pts state json round trip") {
  const PtsState s = pts_init(pool(4, 4), 0.5, 0.5, 1);
  nlohmann::json j = s;
  CHECK(j.get<PtsState>() == s);
}

TEST_CASE("dfq logits") {
  const std::vector<double> c{3.0, 4.0};
  DfqState s = dfq_init(c);
  CHECK(norm(s.center) == doctest::Approx(1.0).epsilon(1e-15));
  const DfqLogits l = dfq_logits(c, s);
  CHECK(l.log0 == doctest::Approx(1.0));
  CHECK(l.log1 == -1.0);
  CHECK_THROWS_AS(dfq_logits(std::vector<double>{0.0, 0.0}, s), ParameterError);
  CHECK_THROWS_AS(dfq_init(std::vector<double>{0.0, 0.0}), ParameterError);
}

TEST_CASE("dfq best queue cosine equals a scan") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 1.0);
  const std::size_t dim = 8;
  std::vector<double> c(dim);
  for (double& x : c) x = n(rng);
  DfqConfig cfg;
  cfg.alpha = 1.0;
  DfqState s = dfq_init(c, cfg);
  std::vector<std::vector<double>> raw;
  for (int i = 0; i < 16; ++i) {
    std::vector<double> f(dim);
    for (double& x : f) x = n(rng);
    raw.push_back(f);
    s = dfq_update(s, f, -0.5);
  }
  REQUIRE(s.queue.size() == 16);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> f(dim);
    for (double& x : f) x = n(rng);
    double best = -2.0;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      const double cs = cosine(f, raw[i]);
      if (cs > best) best = cs, arg = i;
    }
    const DfqLogits l = dfq_logits(f, s);
    CHECK(l.log1 == doctest::Approx(best).epsilon(1e-12));
    CHECK(l.best == arg);
    CHECK(l.log0 == doctest::Approx(cosine(f, c)).epsilon(1e-12));
  }
}

TEST_CASE("dfq update rule and eviction") {
  DfqConfig cfg;
  cfg.capacity = 3;
  cfg.alpha = 0.5;
  DfqState s = dfq_init(std::vector<double>{1.0, 0.0}, cfg);
  const DfqState same = dfq_update(s, std::vector<double>{0.0, 1.0}, 0.5);
  CHECK(same.queue.empty());
  CHECK(same.enqueued_total == 0);
  for (int i = 1; i <= 4; ++i) s = dfq_update(s, std::vector<double>{static_cast<double>(i), 1.0}, 0.0);
  REQUIRE(s.queue.size() == 3);
  CHECK(s.queue.front()[0] == doctest::Approx(2.0 / std::sqrt(5.0)));
  CHECK(s.queue.back()[0] == doctest::Approx(4.0 / std::sqrt(17.0)));
}

TEST_CASE("dfq center is the renormalized running mean") {
  DfqState s = dfq_init(std::vector<double>{1.0, 0.0});
  s = dfq_update_center(s, std::vector<double>{0.0, 5.0});
  CHECK(s.center[0] == doctest::Approx(std::sqrt(0.5)));
  CHECK(s.center[1] == doctest::Approx(std::sqrt(0.5)));
  CHECK(s.center_count == 2);
}

TEST_CASE("schedules") {
  const LrSchedule warm = LrSchedule::cosine_warmup(0.01, 1, 30, 0.01);
  CHECK(lr_at(warm, 29) == 0.01 * 0.01);
  CHECK(lr_at(warm, 100) == 0.01 * 0.01);
  CHECK(lr_at(warm, 0) < lr_at(warm, 1));
  CHECK(lr_at(warm, 1) == doctest::Approx(0.01));

  const LrSchedule step = LrSchedule::step_decay(1e-4, 0.8, 20);
  CHECK(lr_at(step, 0) == 1e-4);
  CHECK(lr_at(step, 19) == 1e-4);
  CHECK(lr_at(step, 20) == doctest::Approx(8e-5).epsilon(1e-12));
  CHECK(lr_at(step, 40) == doctest::Approx(6.4e-5).epsilon(1e-12));

  const LrSchedule cyc = LrSchedule::cyclic(1e-5, 2e-3, 10);
  double lo = 1.0, hi = 0.0;
  for (std::size_t e = 0; e < 20; ++e) {
    lo = std::min(lo, lr_at(cyc, e));
    hi = std::max(hi, lr_at(cyc, e));
  }
  CHECK(lo == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(hi == doctest::Approx(2e-3).epsilon(1e-12));
  CHECK(lr_at(cyc, 3) == lr_at(cyc, 23));

  const LrSchedule ann = LrSchedule::cosine_annealing(0.01, 100, 0.0);
  CHECK(lr_at(ann, 0) == 0.01);
  CHECK(lr_at(ann, 50) == doctest::Approx(0.005));
  CHECK(lr_at(ann, 100) == 0.0);

  const LrSchedule restart = LrSchedule::cosine_restart(1e-4, 20, 0.5);
  CHECK(lr_at(restart, 0) == 1e-4);
  CHECK(lr_at(restart, 20) == doctest::Approx(5e-5));
  CHECK(lr_at(restart, 40) == doctest::Approx(2.5e-5));

  for (std::size_t e = 0; e < 150; ++e) CHECK(lr_at(cyc, e) > 0.0);
  nlohmann::json j = warm;
  const LrSchedule back = j.get<LrSchedule>();
  for (std::size_t e = 0; e < 40; ++e) CHECK(lr_at(back, e) == lr_at(warm, e));
}

TEST_CASE("ema") {
  const std::vector<double> p{1.0, -2.0, 3.0};
  CHECK(ema_update(std::vector<double>{5.0, 5.0, 5.0}, p, 0.0) == p);
  std::vector<double> e{0.0, 0.0, 0.0};
  const double d = 0.9;
  for (int k = 1; k <= 50; ++k) {
    e = ema_update(e, p, d);
    for (std::size_t i = 0; i < p.size(); ++i) {
      // Geometric sum: (1 - d) sum_{j<k} d^j p = (1 - d^k) p.
      CHECK(std::abs(e[i] - (1.0 - std::pow(d, k)) * p[i]) < 1e-12);
    }
  }
  CHECK_THROWS_AS(ema_update(e, std::vector<double>{1.0}, 0.5), ParameterError);
}

TEST_CASE("early stopping") {
  std::vector<double> improving;
  for (int i = 0; i < 30; ++i) {
    improving.push_back(1.0 / (i + 1));
    CHECK_FALSE(early_stop(improving, 3));
  }
  CHECK(early_stop(std::vector<double>{1.0, 1.0, 1.0, 1.0}, 3));
  CHECK_FALSE(early_stop(std::vector<double>{1.0, 1.0, 1.0}, 3));

  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 500; ++rep) {
    std::vector<double> h(1 + rep % 25);
    for (double& x : h) x = std::round(u(rng) * 8.0) / 8.0;
    const std::size_t patience = 1 + rep % 6;
    bool expected = false;
    if (h.size() > patience) {
      expected = true;
      const std::size_t cut = h.size() - patience;
      for (std::size_t i = cut; i < h.size(); ++i) {
        bool beats_all = true;
        for (std::size_t j = 0; j < cut; ++j) beats_all = beats_all && h[i] < h[j];
        if (beats_all) expected = false;
      }
    }
    CHECK(early_stop(h, patience) == expected);
  }
}
