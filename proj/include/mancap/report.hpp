#pragma once

// Plot-ready tabular output: one row per (condition, scheme, layer, metric).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "mancap/error.hpp"

namespace mancap {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kCsvHeader =
    "condition,scheme,coherence,layer,metric,value,normalized_value,status";

struct Provenance {
  std::string input_digest;
  std::string config_digest;
  std::uint64_t seed = 0;
  std::string tool_version = kToolVersion;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct ComparisonRow {
  std::string condition;
  std::string scheme;
  std::string coherence = "n/a";  // coherent | incoherent | n/a
  std::uint64_t layer = 0;
  std::string metric;
  std::optional<double> value;
  std::optional<double> normalized_value;
  std::string status = "ok";

  friend bool operator==(const ComparisonRow&, const ComparisonRow&) = default;
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;
  std::map<std::string, Provenance> provenance;  // condition -> provenance
};

enum class OutputFormat { csv, json };

/// Formats with 9 significant digits.
inline std::string format_float(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

/// The double nearest to format_float(v).
inline double round_float(double v) { return std::strtod(format_float(v).c_str(), nullptr); }

inline void sort_rows(std::vector<ComparisonRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return std::tie(a.condition, a.scheme, a.layer, a.metric) <
           std::tie(b.condition, b.scheme, b.layer, b.metric);
  });
}

/// True when any row carries a status other than "ok".
inline bool has_flagged_rows(const ComparisonReport& r) {
  return std::any_of(r.rows.begin(), r.rows.end(),
                     [](const auto& row) { return row.status != "ok"; });
}

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace detail

inline void emit_csv(const ComparisonReport& report, std::ostream& out) {
  auto rows = report.rows;
  sort_rows(rows);
  out << kCsvHeader << '\n';
  for (const auto& r : rows) {
    out << detail::csv_field(r.condition) << ',' << detail::csv_field(r.scheme) << ','
        << detail::csv_field(r.coherence) << ',' << r.layer << ',' << detail::csv_field(r.metric)
        << ',' << (r.value ? format_float(*r.value) : "") << ','
        << (r.normalized_value ? format_float(*r.normalized_value) : "") << ','
        << detail::csv_field(r.status) << '\n';
  }
}

inline nlohmann::json report_to_json(const ComparisonReport& report) {
  auto rows = report.rows;
  sort_rows(rows);
  nlohmann::json j;
  j["columns"] = {"condition", "scheme", "coherence", "layer",
                  "metric",    "value",  "normalized_value", "status"};
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json row;
    row["condition"] = r.condition;
    row["scheme"] = r.scheme;
    row["coherence"] = r.coherence;
    row["layer"] = r.layer;
    row["metric"] = r.metric;
    row["value"] = r.value ? nlohmann::json(round_float(*r.value)) : nlohmann::json(nullptr);
    row["normalized_value"] = r.normalized_value ? nlohmann::json(round_float(*r.normalized_value))
                                                 : nlohmann::json(nullptr);
    row["status"] = r.status;
    j["rows"].push_back(std::move(row));
  }
  j["provenance"] = nlohmann::json::object();
  for (const auto& [cond, p] : report.provenance) {
    j["provenance"][cond] = {{"input_digest", p.input_digest},
                             {"config_digest", p.config_digest},
                             {"seed", p.seed},
                             {"tool_version", p.tool_version}};
  }
  return j;
}

inline void emit_json(const ComparisonReport& report, std::ostream& out) {
  out << report_to_json(report).dump(2) << '\n';
}

inline void emit(const ComparisonReport& report, OutputFormat format, std::ostream& out) {
  if (format == OutputFormat::csv) {
    emit_csv(report, out);
  } else {
    emit_json(report, out);
  }
}

inline ComparisonReport report_from_json(const nlohmann::json& j) {
  try {
    ComparisonReport report;
    for (const auto& row : j.at("rows")) {
      ComparisonRow r;
      r.condition = row.at("condition").get<std::string>();
      r.scheme = row.at("scheme").get<std::string>();
      r.coherence = row.at("coherence").get<std::string>();
      r.layer = row.at("layer").get<std::uint64_t>();
      r.metric = row.at("metric").get<std::string>();
      if (!row.at("value").is_null()) r.value = row["value"].get<double>();
      if (!row.at("normalized_value").is_null())
        r.normalized_value = row["normalized_value"].get<double>();
      r.status = row.at("status").get<std::string>();
      report.rows.push_back(std::move(r));
    }
    if (j.contains("provenance")) {
      for (const auto& [cond, p] : j["provenance"].items()) {
        report.provenance[cond] = {p.at("input_digest").get<std::string>(),
                                   p.at("config_digest").get<std::string>(),
                                   p.at("seed").get<std::uint64_t>(),
                                   p.at("tool_version").get<std::string>()};
      }
    }
    return report;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report JSON: ") + e.what());
  }
}

}  // namespace mancap
