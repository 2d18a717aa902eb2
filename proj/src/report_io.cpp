#include "declip/report_io.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace declip {

using nlohmann::json;

std::string format_pct(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", fraction * 100.0);
  return buf;
}

json report_to_json(const FairnessReport& rep) {
  json groups = json::object();
  for (const auto& [name, st] : rep.groups) {
    json g;
    g["n"] = st.n;
    g["positives"] = st.positives;
    if (st.auc) {
      g["auc"] = *st.auc;
      g["auc_pct"] = *st.auc * 100.0;
    } else {
      g["auc"] = nullptr;
    }
    groups[name] = g;
  }
  return json{{"attribute", rep.attribute},
              {"overall_auc", rep.overall_auc},
              {"overall_auc_pct", rep.overall_auc * 100.0},
              {"es_auc", rep.es_auc_value},
              {"es_auc_pct", rep.es_auc_value * 100.0},
              {"es_auc_mode", to_string(rep.es_auc_mode)},
              {"eod", rep.eod_value},
              {"eod_pct", rep.eod_value * 100.0},
              {"group_auc_std", rep.group_auc_std},
              {"groups", groups},
              {"undefined_groups", rep.undefined_groups},
              {"metadata",
               {{"score_definition", rep.score_definition},
                {"threshold_rule", rep.threshold_rule},
                {"es_auc_mode", to_string(rep.es_auc_mode)}}}};
}

FairnessReport report_from_json(const json& j) {
  FairnessReport rep;
  rep.attribute = j.at("attribute").get<std::string>();
  rep.overall_auc = j.at("overall_auc").get<double>();
  rep.es_auc_value = j.at("es_auc").get<double>();
  rep.es_auc_mode = es_auc_mode_from_string(j.at("es_auc_mode").get<std::string>());
  rep.eod_value = j.at("eod").get<double>();
  rep.group_auc_std = j.value("group_auc_std", 0.0);
  if (j.contains("groups"))
    for (const auto& [name, g] : j.at("groups").items()) {
      GroupStat st;
      st.n = g.value("n", 0);
      st.positives = g.value("positives", 0);
      if (g.contains("auc") && !g.at("auc").is_null()) st.auc = g.at("auc").get<double>();
      rep.groups[name] = st;
    }
  if (j.contains("undefined_groups"))
    rep.undefined_groups = j.at("undefined_groups").get<std::vector<std::string>>();
  if (j.contains("metadata")) {
    rep.score_definition = j.at("metadata").value("score_definition", "");
    rep.threshold_rule = j.at("metadata").value("threshold_rule", "argmax");
  }
  return rep;
}

void save_report_set(const std::string& path,
                     const std::map<std::string, FairnessReport>& reports) {
  json j;
  j["schema_version"] = 1;
  json attrs = json::object();
  for (const auto& [name, rep] : reports) attrs[name] = report_to_json(rep);
  j["attributes"] = attrs;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_report_set: cannot open " + path);
  out << j.dump(2) << "\n";
}

std::map<std::string, FairnessReport> load_report_set(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_report_set: cannot open " + path);
  json j = json::parse(in);
  std::map<std::string, FairnessReport> out;
  for (const auto& [name, rep] : j.at("attributes").items())
    out[name] = report_from_json(rep);
  return out;
}

void save_radar_csv(const std::string& path,
                    const std::map<std::string, FairnessReport>& reports) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_radar_csv: cannot open " + path);
  out << "attribute,metric,group,value_pct\n";
  for (const auto& [attr, rep] : reports) {
    out << attr << ",eod,," << format_pct(rep.eod_value) << "\n";
    out << attr << ",es_auc,," << format_pct(rep.es_auc_value) << "\n";
    out << attr << ",overall_auc,," << format_pct(rep.overall_auc) << "\n";
    out << attr << ",group_auc_std,," << format_pct(rep.group_auc_std) << "\n";
    for (const auto& [g, st] : rep.groups)
      if (st.auc) out << attr << ",group_auc," << g << "," << format_pct(*st.auc) << "\n";
  }
}

}  // namespace declip
