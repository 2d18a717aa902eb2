#include "declip/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace declip {

const char* to_string(EsAucMode m) { return m == EsAucMode::Ratio ? "ratio" : "mean-gap"; }

EsAucMode es_auc_mode_from_string(const std::string& s) {
  if (s == "ratio") return EsAucMode::Ratio;
  if (s == "mean-gap") return EsAucMode::MeanGap;
  throw std::invalid_argument("unknown es-auc mode: " + s);
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("auc: scores/labels length mismatch");
  const size_t n = scores.size();
  size_t pos = 0;
  for (int y : labels) pos += (y == 1);
  const size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw std::invalid_argument("auc: undefined AUC (single class)");

  // Average ranks with midrank tie handling.
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  double rank_pos_sum = 0.0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (size_t t = i; t <= j; ++t)
      if (labels[order[t]] == 1) rank_pos_sum += avg_rank;
    i = j + 1;
  }
  const double p = static_cast<double>(pos);
  return (rank_pos_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

namespace {

std::map<std::string, std::vector<const ScoredRow*>> by_group(std::span<const ScoredRow> rows) {
  std::map<std::string, std::vector<const ScoredRow*>> m;
  for (const auto& r : rows) {
    if (r.group.empty()) throw std::invalid_argument("metrics: empty group category");
    m[r.group].push_back(&r);
  }
  return m;
}

std::optional<double> group_auc(const std::vector<const ScoredRow*>& rows) {
  std::vector<double> s;
  std::vector<int> y;
  for (const auto* r : rows) {
    s.push_back(r->score);
    y.push_back(r->label);
  }
  const bool has_pos = std::find(y.begin(), y.end(), 1) != y.end();
  const bool has_neg = std::find(y.begin(), y.end(), 0) != y.end();
  if (!has_pos || !has_neg) return std::nullopt;
  return auc(s, y);
}

}  // namespace

std::map<std::string, GroupStat> groupwise_auc(std::span<const ScoredRow> rows) {
  std::map<std::string, GroupStat> out;
  for (const auto& [name, members] : by_group(rows)) {
    GroupStat st;
    st.n = static_cast<int>(members.size());
    for (const auto* r : members) st.positives += (r->label == 1);
    st.auc = group_auc(members);
    out[name] = st;
  }
  return out;
}

EodResult eod(std::span<const ScoredRow> rows) {
  struct Rates {
    std::optional<double> tpr, fpr;
  };
  std::map<std::string, Rates> rates;
  for (const auto& [name, members] : by_group(rows)) {
    int tp = 0, fn = 0, fp = 0, tn = 0;
    for (const auto* r : members) {
      if (r->label == 1)
        (r->pred == 1 ? tp : fn)++;
      else
        (r->pred == 1 ? fp : tn)++;
    }
    Rates rt;
    if (tp + fn > 0) rt.tpr = static_cast<double>(tp) / (tp + fn);
    if (fp + tn > 0) rt.fpr = static_cast<double>(fp) / (fp + tn);
    rates[name] = rt;
  }

  EodResult out;
  std::vector<double> tprs, fprs;
  int both_defined = 0;
  for (const auto& [name, rt] : rates) {
    if (rt.tpr)
      tprs.push_back(*rt.tpr);
    else
      out.skipped_tpr.push_back(name);
    if (rt.fpr)
      fprs.push_back(*rt.fpr);
    else
      out.skipped_fpr.push_back(name);
    if (rt.tpr && rt.fpr) ++both_defined;
  }
  if (both_defined < 2)
    throw std::invalid_argument("eod: fewer than 2 groups with both TPR and FPR defined");

  auto max_gap = [](const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi - *lo;
  };
  out.value = max_gap(tprs) + max_gap(fprs);
  return out;
}

double es_auc(std::span<const ScoredRow> rows, EsAucMode mode) {
  std::vector<double> s;
  std::vector<int> y;
  for (const auto& r : rows) {
    s.push_back(r.score);
    y.push_back(r.label);
  }
  const double overall = auc(s, y);

  std::vector<double> group_aucs;
  for (const auto& [name, st] : groupwise_auc(rows))
    if (st.auc) group_aucs.push_back(*st.auc);
  if (group_aucs.empty()) throw std::invalid_argument("es_auc: no group with defined AUC");

  if (mode == EsAucMode::Ratio) {
    double dev = 0.0;
    for (double a : group_aucs) dev += std::abs(a - overall);
    return overall / (1.0 + dev);
  }
  const double mean =
      std::accumulate(group_aucs.begin(), group_aucs.end(), 0.0) / group_aucs.size();
  const auto [lo, hi] = std::minmax_element(group_aucs.begin(), group_aucs.end());
  return std::max(0.0, mean - (*hi - *lo));
}

std::vector<int> hard_labels(std::span<const ScoredRow> rows, ThresholdRule rule, double t) {
  std::vector<int> out;
  out.reserve(rows.size());
  if (rule == ThresholdRule::Argmax) {
    for (const auto& r : rows) out.push_back(r.pred);
    return out;
  }
  if (t < 0.0 || t > 1.0)
    throw std::invalid_argument("hard_labels: threshold " + std::to_string(t) +
                                " outside [0,1]");
  for (const auto& r : rows) out.push_back(r.score >= t ? 1 : 0);
  return out;
}

FairnessReport fairness_report(std::span<const ScoredRow> rows, const std::string& attribute,
                               EsAucMode mode, const std::string& score_definition) {
  FairnessReport rep;
  rep.attribute = attribute;
  rep.es_auc_mode = mode;
  rep.score_definition = score_definition;

  std::vector<double> s;
  std::vector<int> y;
  for (const auto& r : rows) {
    s.push_back(r.score);
    y.push_back(r.label);
  }
  rep.overall_auc = auc(s, y);
  rep.groups = groupwise_auc(rows);
  for (const auto& [name, st] : rep.groups)
    if (!st.auc) rep.undefined_groups.push_back(name);
  rep.es_auc_value = es_auc(rows, mode);
  rep.eod_value = eod(rows).value;

  std::vector<double> defined;
  for (const auto& [name, st] : rep.groups)
    if (st.auc) defined.push_back(*st.auc);
  if (!defined.empty()) {
    const double mean =
        std::accumulate(defined.begin(), defined.end(), 0.0) / defined.size();
    double var = 0.0;
    for (double a : defined) var += (a - mean) * (a - mean);
    rep.group_auc_std = std::sqrt(var / defined.size());
  }
  return rep;
}

}  // namespace declip
