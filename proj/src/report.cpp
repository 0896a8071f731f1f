// SPDX-License-Identifier: Apache-2.0
#include "mucrasp/report.hpp"

#include <map>
#include <sstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "mucrasp/common.hpp"
#include "mucrasp/serialize.hpp"

namespace mucrasp {

namespace {

using nlohmann::json;

const char* const kColumns[] = {
    "scoring",     "allocation",       "pivot_mode",
    "ok",          "budget",           "kept_params",
    "perplexity",  "dense_perplexity", "mean_kl",
    "dropped_positions", "total_positions", "error"};

struct Row {
  std::string method;
  json S;  // number or null
  std::map<std::string, json> fields;
};

std::string row_key(const std::string& method, const json& S) {
  return method + "\x1f" + S.dump();
}

void set_field(Row& row, const std::string& column, json value) {
  auto it = row.fields.find(column);
  if (it != row.fields.end() && it->second != value)
    throw MucraspError("report: conflicting values for column '" + column +
                       "' of method '" + row.method + "' at S=" + row.S.dump());
  row.fields[column] = std::move(value);
}

void set_report_fields(Row& row, const json& body) {
  set_field(row, "perplexity", body.at("perplexity"));
  set_field(row, "dense_perplexity", body.at("dense_perplexity"));
  set_field(row, "mean_kl", body.at("mean_kl"));
  set_field(row, "dropped_positions", body.at("dropped_positions"));
  set_field(row, "total_positions", body.at("total_positions"));
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

std::string csv_cell(const json& v) {
  if (v.is_null()) return "";
  if (v.is_string()) return csv_escape(v.get<std::string>());
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  return v.dump();
}

}  // namespace

MergedReport merge_reports(const std::vector<std::string>& documents) {
  if (documents.empty()) throw MucraspError("report: no input documents");

  std::vector<Row> rows;
  std::map<std::string, size_t> index;
  auto row_for = [&](const std::string& method, const json& S) -> Row& {
    const std::string key = row_key(method, S);
    auto it = index.find(key);
    if (it != index.end()) return rows[it->second];
    index.emplace(key, rows.size());
    rows.push_back(Row{method, S, {}});
    return rows.back();
  };

  for (const std::string& text : documents) {
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::exception& e) {
      throw MucraspError(std::string("report: invalid JSON input: ") + e.what());
    }
    try {
      if (doc.at("schema_version").get<int>() != kSchemaVersion)
        throw MucraspError("report: unsupported schema version " +
                           doc.at("schema_version").dump());
      const std::string kind = doc.at("kind").get<std::string>();

      if (kind == "compare") {
        for (const json& r : doc.at("rows")) {
          Row& row = row_for(r.at("method").get<std::string>(), r.at("S"));
          set_field(row, "scoring", r.at("scoring"));
          set_field(row, "allocation", r.at("allocation"));
          set_field(row, "pivot_mode", r.at("pivot_mode"));
          set_field(row, "ok", r.at("ok"));
          if (r.at("ok").get<bool>()) {
            set_field(row, "budget", r.at("budget"));
            set_field(row, "kept_params", r.at("kept_params"));
            set_report_fields(row, r.at("report"));
          } else {
            set_field(row, "error", r.at("error"));
          }
        }
      } else if (kind == "plan") {
        const json& c = doc.at("config");
        Row& row = row_for(c.at("scoring").get<std::string>(), c.at("S"));
        set_field(row, "scoring", c.at("scoring"));
        set_field(row, "allocation", c.at("allocation"));
        set_field(row, "pivot_mode", c.at("pivot_mode"));
        set_field(row, "ok", true);
        set_field(row, "budget", doc.at("budget"));
        set_field(row, "kept_params", doc.at("kept_params"));
      } else if (kind == "eval") {
        const std::string method =
            doc.contains("method") ? doc.at("method").get<std::string>() : "eval";
        Row& row = row_for(method, doc.contains("S") ? doc.at("S") : json());
        set_field(row, "ok", true);
        set_report_fields(row, doc.at("report"));
      } else if (kind == "ablate") {
        for (const json& r : doc.at("rows")) {
          const std::string method =
              "ablate@" + r.at("window_start").dump() + "+" +
              r.at("window_len").dump();
          Row& row = row_for(method, json());
          set_field(row, "ok", true);
          set_report_fields(row, r.at("report"));
        }
      } else {
        throw MucraspError("report: unknown document kind '" + kind + "'");
      }
    } catch (const json::exception& e) {
      throw MucraspError(std::string("report: bad field: ") + e.what());
    }
  }

  json out_rows = json::array();
  for (const Row& row : rows) {
    json r = {{"method", row.method}, {"S", row.S}};
    for (const char* col : kColumns) {
      auto it = row.fields.find(col);
      if (it != row.fields.end()) r[col] = it->second;
    }
    out_rows.push_back(std::move(r));
  }
  json out = {{"schema_version", kSchemaVersion},
              {"kind", "report"},
              {"rows", std::move(out_rows)}};

  std::ostringstream csv;
  csv << "method,S,scoring,allocation,pivot_mode,ok,budget,kept_params,"
         "perplexity,dense_perplexity,mean_kl,dropped_positions,"
         "total_positions,error\n";
  for (const Row& row : rows) {
    csv << csv_escape(row.method) << ',' << csv_cell(row.S);
    for (const char* col : kColumns) {
      auto it = row.fields.find(col);
      csv << ',' << (it != row.fields.end() ? csv_cell(it->second) : "");
    }
    csv << '\n';
  }

  return {out.dump(2) + "\n", csv.str()};
}

}  // namespace mucrasp
