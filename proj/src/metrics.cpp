#include "padkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>

#include "padkit/csv.hpp"
#include "padkit/error.hpp"

namespace padkit {

namespace {

void check_inputs(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) {
    throw ParameterError("scores and labels differ in length");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw ValidationError("scores must be finite");
  }
}

struct ClassCounts {
  std::uint64_t attack = 0;
  std::uint64_t bonafide = 0;
};

ClassCounts count_classes(std::span<const Label> labels) {
  ClassCounts c;
  for (Label l : labels) (l == Label::bonafide ? c.bonafide : c.attack) += 1;
  return c;
}

void require_both(const ClassCounts& c, const char* what) {
  if (c.attack == 0 || c.bonafide == 0) {
    throw UndefinedMetricError(std::string(what) + " needs both attack and bona fide samples");
  }
}

double below(double v) {
  const double t = v - 1.0;
  return t < v ? t : std::nextafter(v, -std::numeric_limits<double>::infinity());
}

double above(double v) {
  const double t = v + 1.0;
  return t > v ? t : std::nextafter(v, std::numeric_limits<double>::infinity());
}

// Midpoint strictly above a; falls back to b when a and b are adjacent doubles.
double midpoint(double a, double b) {
  double m = a + (b - a) / 2.0;
  if (!std::isfinite(m)) m = a / 2.0 + b / 2.0;
  return m > a ? m : b;
}

}  // namespace

double apcer(std::span<const double> scores, std::span<const Label> labels, double threshold) {
  check_inputs(scores, labels);
  std::uint64_t total = 0, accepted = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != Label::attack) continue;
    ++total;
    if (scores[i] >= threshold) ++accepted;
  }
  if (total == 0) throw UndefinedMetricError("APCER is undefined without attack samples");
  return static_cast<double>(accepted) / static_cast<double>(total);
}

double bpcer(std::span<const double> scores, std::span<const Label> labels, double threshold) {
  check_inputs(scores, labels);
  std::uint64_t total = 0, rejected = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != Label::bonafide) continue;
    ++total;
    if (scores[i] < threshold) ++rejected;
  }
  if (total == 0) throw UndefinedMetricError("BPCER is undefined without bona fide samples");
  return static_cast<double>(rejected) / static_cast<double>(total);
}

std::vector<double> candidate_thresholds(std::span<const double> scores) {
  std::vector<double> distinct(scores.begin(), scores.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<double> out;
  if (distinct.empty()) return out;
  out.reserve(distinct.size() + 1);
  out.push_back(below(distinct.front()));
  for (std::size_t i = 0; i + 1 < distinct.size(); ++i) {
    out.push_back(midpoint(distinct[i], distinct[i + 1]));
  }
  out.push_back(above(distinct.back()));
  return out;
}

EerResult eer_threshold(std::span<const double> scores, std::span<const Label> labels) {
  check_inputs(scores, labels);
  const ClassCounts n = count_classes(labels);
  require_both(n, "EER");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Walk the distinct score groups. Before group g is consumed the
  // threshold sits just below that group's score.
  std::uint64_t attacks_below = 0, bonafide_below = 0;
  bool have_best = false;
  std::uint64_t best_diff = 0, best_sum = 0;
  std::uint64_t best_fa = 0, best_fr = 0;
  double best_threshold = 0.0;

  auto consider = [&](double threshold) {
    const std::uint64_t fa = n.attack - attacks_below;  // attacks accepted
    const std::uint64_t fr = bonafide_below;             // bona fide rejected
    // Common denominator attack * bonafide.
    const std::uint64_t a = fa * n.bonafide;
    const std::uint64_t b = fr * n.attack;
    const std::uint64_t diff = a > b ? a - b : b - a;
    const std::uint64_t sum = a + b;
    if (!have_best || diff < best_diff || (diff == best_diff && sum < best_sum)) {
      have_best = true;
      best_diff = diff;
      best_sum = sum;
      best_fa = fa;
      best_fr = fr;
      best_threshold = threshold;
    }
  };

  consider(below(scores[order.front()]));
  std::size_t i = 0;
  while (i < order.size()) {
    const double v = scores[order[i]];
    while (i < order.size() && scores[order[i]] == v) {
      (labels[order[i]] == Label::bonafide ? bonafide_below : attacks_below) += 1;
      ++i;
    }
    consider(i < order.size() ? midpoint(v, scores[order[i]]) : above(v));
  }

  EerResult r;
  r.threshold = best_threshold;
  r.apcer = static_cast<double>(best_fa) / static_cast<double>(n.attack);
  r.bpcer = static_cast<double>(best_fr) / static_cast<double>(n.bonafide);
  r.eer = acer(r.apcer, r.bpcer);
  return r;
}

double auc(std::span<const double> scores, std::span<const Label> labels) {
  check_inputs(scores, labels);
  const ClassCounts n = count_classes(labels);
  require_both(n, "AUC");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  std::uint64_t wins = 0, ties = 0, attacks_below = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double v = scores[order[i]];
    std::uint64_t group_attack = 0, group_bonafide = 0;
    while (i < order.size() && scores[order[i]] == v) {
      (labels[order[i]] == Label::bonafide ? group_bonafide : group_attack) += 1;
      ++i;
    }
    wins += group_bonafide * attacks_below;
    ties += group_bonafide * group_attack;
    attacks_below += group_attack;
  }
  return static_cast<double>(2 * wins + ties) / static_cast<double>(2 * n.attack * n.bonafide);
}

MetricReport report_at(std::span<const double> scores, std::span<const Label> labels,
                       double threshold, double eer) {
  const ClassCounts n = count_classes(labels);
  require_both(n, "metric report");
  MetricReport r;
  r.threshold = threshold;
  r.apcer = apcer(scores, labels, threshold);
  r.bpcer = bpcer(scores, labels, threshold);
  r.acer = acer(r.apcer, r.bpcer);
  r.auc = auc(scores, labels);
  r.eer = eer;
  r.n_attack = n.attack;
  r.n_bonafide = n.bonafide;
  return r;
}

std::pair<std::vector<double>, std::vector<Label>> align_scores(
    std::span<const ScoredSample> scores, const LabelMap& labels) {
  std::vector<double> s;
  std::vector<Label> l;
  s.reserve(scores.size());
  l.reserve(scores.size());
  std::set<std::string> seen;
  std::vector<std::string> extra, duplicate, missing;
  for (const auto& row : scores) {
    if (!seen.insert(row.sample_id).second) {
      duplicate.push_back(row.sample_id);
      continue;
    }
    const auto it = labels.find(row.sample_id);
    if (it == labels.end()) {
      extra.push_back(row.sample_id);
      continue;
    }
    s.push_back(row.score);
    l.push_back(it->second);
  }
  for (const auto& [id, label] : labels) {
    if (!seen.contains(id)) missing.push_back(id);
  }
  if (!extra.empty() || !duplicate.empty() || !missing.empty()) {
    std::string msg = "score ids do not match the manifest";
    auto list = [&msg](const char* what, const std::vector<std::string>& ids) {
      if (ids.empty()) return;
      msg += std::string("; ") + what + ":";
      for (const auto& id : ids) msg += " " + id;
    };
    list("missing", missing);
    list("extra", extra);
    list("duplicate", duplicate);
    throw ValidationError(msg);
  }
  return {std::move(s), std::move(l)};
}

MetricReport evaluate_submission(std::span<const ScoredSample> dev_scores, const LabelMap& dev_labels,
                                 std::span<const ScoredSample> test_scores,
                                 const LabelMap& test_labels) {
  const auto [dev_s, dev_l] = align_scores(dev_scores, dev_labels);
  const auto [test_s, test_l] = align_scores(test_scores, test_labels);
  const EerResult eer = eer_threshold(dev_s, dev_l);
  return report_at(test_s, test_l, eer.threshold, eer.eer);
}

std::vector<RankedEntry> rank(std::span<const RankedEntry> reports) {
  std::vector<RankedEntry> out(reports.begin(), reports.end());
  std::sort(out.begin(), out.end(), [](const RankedEntry& a, const RankedEntry& b) {
    if (a.report.acer != b.report.acer) return a.report.acer < b.report.acer;
    if (a.report.apcer != b.report.apcer) return a.report.apcer < b.report.apcer;
    return a.team < b.team;
  });
  return out;
}

std::vector<RankedEntry> rank(const std::map<std::string, MetricReport>& reports) {
  std::vector<RankedEntry> entries;
  entries.reserve(reports.size());
  for (const auto& [team, report] : reports) entries.push_back({team, report});
  return rank(std::span<const RankedEntry>(entries));
}

void to_json(nlohmann::json& j, const MetricReport& r) {
  j = {{"apcer", r.apcer},         {"bpcer", r.bpcer},          {"acer", r.acer},
       {"auc", r.auc},             {"eer", r.eer},              {"threshold", r.threshold},
       {"n_attack", r.n_attack},   {"n_bonafide", r.n_bonafide}};
}

void from_json(const nlohmann::json& j, MetricReport& r) {
  j.at("apcer").get_to(r.apcer);
  j.at("bpcer").get_to(r.bpcer);
  j.at("acer").get_to(r.acer);
  j.at("auc").get_to(r.auc);
  j.at("eer").get_to(r.eer);
  j.at("threshold").get_to(r.threshold);
  r.n_attack = j.value("n_attack", std::size_t{0});
  r.n_bonafide = j.value("n_bonafide", std::size_t{0});
}

std::vector<ScoredSample> read_scores_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || csv::split_line(line) != std::vector<std::string>{"sample_id", "score"}) {
    throw ParseError("score file must start with the header 'sample_id,score'");
  }
  std::vector<ScoredSample> out;
  std::set<std::string> seen;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    const auto fields = csv::split_line(line);
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != 2) {
      throw ParseError("score file row " + std::to_string(row) + ": expected 2 columns");
    }
    const auto value = csv::parse_double(fields[1]);
    if (!value || !std::isfinite(*value)) {
      throw ParseError("score file row " + std::to_string(row) + ": score is not a finite number");
    }
    if (!seen.insert(fields[0]).second) {
      throw ValidationError("score file row " + std::to_string(row) + ": duplicate id " + fields[0]);
    }
    out.push_back({fields[0], *value});
  }
  return out;
}

void write_scores_csv(std::ostream& out, std::span<const ScoredSample> scores) {
  out << "sample_id,score\n";
  for (const auto& s : scores) out << s.sample_id << ',' << csv::format_double(s.score) << '\n';
}

LabelMap read_labels_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || csv::split_line(line) != std::vector<std::string>{"sample_id", "label"}) {
    throw ParseError("label file must start with the header 'sample_id,label'");
  }
  LabelMap out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    const auto fields = csv::split_line(line);
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != 2 || (fields[1] != "0" && fields[1] != "1")) {
      throw ParseError("label file row " + std::to_string(row) + ": expected 'id,0' or 'id,1'");
    }
    if (!out.emplace(fields[0], fields[1] == "1" ? Label::bonafide : Label::attack).second) {
      throw ValidationError("label file row " + std::to_string(row) + ": duplicate id " + fields[0]);
    }
  }
  return out;
}

void write_labels_csv(std::ostream& out, const LabelMap& labels) {
  out << "sample_id,label\n";
  for (const auto& [id, label] : labels) out << id << ',' << (label == Label::bonafide ? 1 : 0) << '\n';
}

}  // namespace padkit
