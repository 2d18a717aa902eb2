#include "declip/compare.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "declip/report_io.hpp"

namespace declip {

using nlohmann::json;

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

}  // namespace

CompareSummary compare(const std::map<std::string, FairnessReport>& a,
                       const std::map<std::string, FairnessReport>& b) {
  std::string only_a, only_b;
  for (const auto& [k, v] : a)
    if (!b.count(k)) only_a += (only_a.empty() ? "" : ", ") + k;
  for (const auto& [k, v] : b)
    if (!a.count(k)) only_b += (only_b.empty() ? "" : ", ") + k;
  if (!only_a.empty() || !only_b.empty())
    throw std::invalid_argument("compare: attribute mismatch (only in a: [" + only_a +
                                "], only in b: [" + only_b + "])");

  CompareSummary s;
  for (const auto& [attr, ra] : a) {
    const FairnessReport& rb = b.at(attr);
    AttributeComparison c;
    c.eod = {ra.eod_value, rb.eod_value};
    c.es_auc = {ra.es_auc_value, rb.es_auc_value};
    c.overall_auc = {ra.overall_auc, rb.overall_auc};
    c.group_auc_std = {ra.group_auc_std, rb.group_auc_std};
    for (const auto& [g, st] : ra.groups)
      c.group_auc[g].a = st.auc ? *st.auc : kNan;
    for (const auto& [g, st] : rb.groups) {
      if (!c.group_auc.count(g)) c.group_auc[g].a = kNan;
      c.group_auc[g].b = st.auc ? *st.auc : kNan;
    }
    for (auto& [g, mp] : c.group_auc)
      if (!rb.groups.count(g)) mp.b = kNan;
    if (ra.eod_value != rb.eod_value)
      c.eod_winner = ra.eod_value < rb.eod_value ? "a" : "b";
    if (ra.es_auc_value != rb.es_auc_value)
      c.es_auc_winner = ra.es_auc_value > rb.es_auc_value ? "a" : "b";
    s.attributes[attr] = std::move(c);
  }
  return s;
}

namespace {

json pair_json(const MetricPair& p) {
  auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
  return json{{"a", num(p.a)}, {"b", num(p.b)},
              {"delta", std::isnan(p.a) || std::isnan(p.b) ? json(nullptr)
                                                           : json(p.delta())}};
}

}  // namespace

void save_compare_json(const std::string& path, const CompareSummary& s) {
  json j;
  j["schema_version"] = 1;
  json attrs = json::object();
  for (const auto& [attr, c] : s.attributes) {
    json e;
    e["eod"] = pair_json(c.eod);
    e["es_auc"] = pair_json(c.es_auc);
    e["overall_auc"] = pair_json(c.overall_auc);
    e["group_auc_std"] = pair_json(c.group_auc_std);
    json groups = json::object();
    for (const auto& [g, mp] : c.group_auc) groups[g] = pair_json(mp);
    e["group_auc"] = groups;
    e["eod_winner"] = c.eod_winner;
    e["es_auc_winner"] = c.es_auc_winner;
    attrs[attr] = e;
  }
  j["attributes"] = attrs;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_compare_json: cannot open " + path);
  out << j.dump(2) << "\n";
}

namespace {

std::string pct_or_empty(double v) { return std::isnan(v) ? "" : format_pct(v); }

void emit_row(std::ostream& out, const std::string& attr, const std::string& metric,
              const std::string& group, const MetricPair& p, const std::string& winner) {
  out << attr << "," << metric << "," << group << "," << pct_or_empty(p.a) << ","
      << pct_or_empty(p.b) << ","
      << (std::isnan(p.a) || std::isnan(p.b) ? "" : format_pct(p.delta())) << "," << winner
      << "\n";
}

}  // namespace

void save_compare_csv(const std::string& path, const CompareSummary& s) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_compare_csv: cannot open " + path);
  out << "attribute,metric,group,run_a_pct,run_b_pct,delta_pct,winner\n";
  for (const auto& [attr, c] : s.attributes) {
    emit_row(out, attr, "eod", "", c.eod, c.eod_winner);
    emit_row(out, attr, "es_auc", "", c.es_auc, c.es_auc_winner);
    emit_row(out, attr, "overall_auc", "", c.overall_auc, "");
    emit_row(out, attr, "group_auc_std", "", c.group_auc_std, "");
    for (const auto& [g, mp] : c.group_auc) emit_row(out, attr, "group_auc", g, mp, "");
  }
}

std::string compare_table_text(const CompareSummary& s) {
  std::ostringstream out;
  for (const auto& [attr, c] : s.attributes) {
    out << attr << ":\n";
    out << "  EOD          a=" << format_pct(c.eod.a) << " b=" << format_pct(c.eod.b)
        << (c.eod_winner.empty() ? "" : " winner=" + c.eod_winner) << "\n";
    out << "  ES-AUC       a=" << format_pct(c.es_auc.a) << " b=" << format_pct(c.es_auc.b)
        << (c.es_auc_winner.empty() ? "" : " winner=" + c.es_auc_winner) << "\n";
    out << "  overall AUC  a=" << format_pct(c.overall_auc.a)
        << " b=" << format_pct(c.overall_auc.b) << "\n";
    for (const auto& [g, mp] : c.group_auc)
      out << "  AUC[" << g << "] a=" << pct_or_empty(mp.a) << " b=" << pct_or_empty(mp.b)
          << "\n";
  }
  return out.str();
}

}  // namespace declip
