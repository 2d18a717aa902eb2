#pragma once

#include <map>
#include <optional>
#include <string>

#include "declip/metrics.hpp"

namespace declip {

struct MetricPair {
  double a = 0.0;
  double b = 0.0;
  double delta() const { return b - a; }
};

struct AttributeComparison {
  MetricPair eod, es_auc, overall_auc, group_auc_std;
  // Groups present in only one run carry the other side as NaN.
  std::map<std::string, MetricPair> group_auc;
  std::string eod_winner;     // "a", "b" or "" (tie); lower EOD wins
  std::string es_auc_winner;  // higher ES-AUC wins
};

struct CompareSummary {
  std::map<std::string, AttributeComparison> attributes;
};

// Side-by-side comparison of two report sets covering the same attributes;
// an attribute mismatch lists the difference.
CompareSummary compare(const std::map<std::string, FairnessReport>& a,
                       const std::map<std::string, FairnessReport>& b);

void save_compare_json(const std::string& path, const CompareSummary& s);
// Percent-formatted flat table (fixed two decimals), one row per metric.
void save_compare_csv(const std::string& path, const CompareSummary& s);
std::string compare_table_text(const CompareSummary& s);

}  // namespace declip
