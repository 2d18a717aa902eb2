#pragma once

#include <map>
#include <string>

#include <json.hpp>

#include "declip/metrics.hpp"

namespace declip {

// AUC-type metrics are stored as fractions and mirrored as percentages
// (value * 100), matching how results tables are conventionally reported.
nlohmann::json report_to_json(const FairnessReport& rep);
FairnessReport report_from_json(const nlohmann::json& j);

// Report set: one FairnessReport per attribute, plus shared metadata.
void save_report_set(const std::string& path,
                     const std::map<std::string, FairnessReport>& reports);
std::map<std::string, FairnessReport> load_report_set(const std::string& path);

// Flat per-metric rows for radar-style plotting tools.
void save_radar_csv(const std::string& path,
                    const std::map<std::string, FairnessReport>& reports);

std::string format_pct(double fraction);  // fixed 2-decimal percentage

}  // namespace declip
