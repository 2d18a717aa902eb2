#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace declip {

struct ScoredRow {
  double score = 0.0;  // continuous score in [0,1]
  int pred = 0;        // hard prediction
  int label = 0;       // true label
  std::string group;   // attribute category
};

enum class EsAucMode { Ratio, MeanGap };
const char* to_string(EsAucMode m);
EsAucMode es_auc_mode_from_string(const std::string& s);

// Rank-based (Mann-Whitney) AUC; ties contribute 1/2. Throws "undefined AUC"
// when only one class is present.
double auc(std::span<const double> scores, std::span<const int> labels);

struct GroupStat {
  std::optional<double> auc;  // empty when the group lacks a class
  int n = 0;
  int positives = 0;
};

std::map<std::string, GroupStat> groupwise_auc(std::span<const ScoredRow> rows);

// Equalized-odds distance: the largest inter-group TPR gap plus the largest
// inter-group FPR gap. Groups missing positives (or negatives) are excluded
// from the respective max; fewer than 2 groups with both rates defined throws.
struct EodResult {
  double value = 0.0;
  std::vector<std::string> skipped_tpr;  // groups with no positives
  std::vector<std::string> skipped_fpr;  // groups with no negatives
};
EodResult eod(std::span<const ScoredRow> rows);

// Disparity-penalized AUC summary. Ratio mode divides the overall AUC by one
// plus the summed absolute group deviations; mean-gap mode subtracts the
// largest pairwise group gap from the mean group AUC, floored at 0.
double es_auc(std::span<const ScoredRow> rows, EsAucMode mode);

enum class ThresholdRule { Argmax, Threshold };

// Hard labels from scores: either keep the zero-shot argmax predictions that
// are already in the rows, or re-threshold at t (score >= t is positive).
std::vector<int> hard_labels(std::span<const ScoredRow> rows, ThresholdRule rule,
                             double t = 0.5);

struct FairnessReport {
  std::string attribute;
  double overall_auc = 0.0;
  std::map<std::string, GroupStat> groups;
  double es_auc_value = 0.0;
  EsAucMode es_auc_mode = EsAucMode::Ratio;
  double eod_value = 0.0;
  double group_auc_std = 0.0;  // over groups with defined AUC
  std::vector<std::string> undefined_groups;
  // Metadata: how scores and hard labels were produced.
  std::string score_definition;
  std::string threshold_rule = "argmax";
};

FairnessReport fairness_report(std::span<const ScoredRow> rows, const std::string& attribute,
                               EsAucMode mode, const std::string& score_definition);

}  // namespace declip
