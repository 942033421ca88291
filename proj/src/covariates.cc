// Copyright 2026 The dermtriage Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dermtriage/covariates.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "dermtriage/csv.h"
#include "dermtriage/error.h"

namespace dermtriage::clinical {
using nlohmann::json;

namespace {

bool ParseDouble(const std::string& s, double* out) {
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  while (begin < end && *begin == ' ') ++begin;
  while (end > begin && end[-1] == ' ') --end;
  if (begin == end) return false;
  auto [ptr, ec] = std::from_chars(begin, end, *out);
  return ec == std::errc() && ptr == end && std::isfinite(*out);
}

const std::string* Lookup(const CovariateRow& row, const std::string& name) {
  auto it = row.values.find(name);
  if (it == row.values.end() || it->second.empty()) return nullptr;
  return &it->second;
}

}  // namespace

void CovariateSchema::Validate() const {
  std::set<std::string> names;
  for (const auto& n : continuous) {
    if (n.empty() || !names.insert(n).second) {
      throw SchemaError("covariate schema: duplicate or empty name '" + n + "'");
    }
  }
  for (const auto& c : categorical) {
    if (c.name.empty() || !names.insert(c.name).second) {
      throw SchemaError("covariate schema: duplicate or empty name '" + c.name + "'");
    }
    if (c.levels.empty()) {
      throw SchemaError("covariate schema: '" + c.name + "' has no levels");
    }
    std::set<std::string> levels(c.levels.begin(), c.levels.end());
    if (levels.size() != c.levels.size()) {
      throw SchemaError("covariate schema: '" + c.name + "' repeats a level");
    }
  }
  if (names.count("image_id")) {
    throw SchemaError("covariate schema: 'image_id' is reserved");
  }
}

CovariateSchema CovariateSchema::FromJson(const json& doc) {
  CovariateSchema schema;
  try {
    for (const auto& n : doc.at("continuous")) schema.continuous.push_back(n.get<std::string>());
    for (const auto& c : doc.at("categorical")) {
      schema.categorical.push_back(
          {c.at("name").get<std::string>(), c.at("levels").get<std::vector<std::string>>()});
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("covariate schema: ") + e.what());
  }
  schema.Validate();
  return schema;
}

json CovariateSchema::ToJson() const {
  json cats = json::array();
  for (const auto& c : categorical) cats.push_back({{"name", c.name}, {"levels", c.levels}});
  return {{"continuous", continuous}, {"categorical", cats}};
}

CovariateSchema LoadSchema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open covariate schema '" + path + "'");
  try {
    return CovariateSchema::FromJson(json::parse(in));
  } catch (const json::parse_error& e) {
    throw SchemaError("covariate schema '" + path + "': " + e.what());
  }
}

std::vector<CovariateRow> LoadCovariateCsv(const std::string& path,
                                           const CovariateSchema& schema) {
  const CsvTable table = ReadCsv(path);
  auto column = [&](const std::string& name) {
    for (std::size_t i = 0; i < table.header.size(); ++i) {
      if (table.header[i] == name) return i;
    }
    throw SchemaError("covariate CSV '" + path + "' lacks column '" + name + "'");
  };
  const std::size_t id_col = column("image_id");
  std::vector<std::pair<std::string, std::size_t>> cols;
  for (const auto& n : schema.continuous) cols.emplace_back(n, column(n));
  for (const auto& c : schema.categorical) cols.emplace_back(c.name, column(c.name));
  std::vector<CovariateRow> rows;
  std::set<std::string> seen;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& cells = table.rows[r];
    if (cells.size() != table.header.size()) {
      throw SchemaError(path + ":" + std::to_string(r + 2) + ": expected " +
                        std::to_string(table.header.size()) + " cells");
    }
    CovariateRow row;
    row.image_id = cells[id_col];
    if (!seen.insert(row.image_id).second) {
      throw DataError("covariate CSV repeats image_id '" + row.image_id + "'");
    }
    for (const auto& [name, idx] : cols) row.values[name] = cells[idx];
    rows.push_back(std::move(row));
  }
  return rows;
}

void WriteCovariateCsv(const std::vector<CovariateRow>& rows,
                       const CovariateSchema& schema, const std::string& path) {
  CsvTable table;
  table.header.push_back("image_id");
  for (const auto& n : schema.continuous) table.header.push_back(n);
  for (const auto& c : schema.categorical) table.header.push_back(c.name);
  for (const auto& row : rows) {
    std::vector<std::string> cells{row.image_id};
    for (std::size_t i = 1; i < table.header.size(); ++i) {
      auto it = row.values.find(table.header[i]);
      cells.push_back(it == row.values.end() ? "" : it->second);
    }
    table.rows.push_back(std::move(cells));
  }
  WriteCsv(table, path);
}

json StandardizationStats::ToJson() const {
  return {{"names", names}, {"mean", mean}, {"stddev", stddev}, {"dropped", dropped}};
}

StandardizationStats StandardizationStats::FromJson(const json& doc) {
  StandardizationStats s;
  s.names = doc.at("names").get<std::vector<std::string>>();
  s.mean = doc.at("mean").get<std::vector<double>>();
  s.stddev = doc.at("stddev").get<std::vector<double>>();
  s.dropped = doc.value("dropped", std::vector<std::string>{});
  return s;
}

StandardizationStats FitStandardizer(const std::vector<CovariateRow>& rows,
                                     const CovariateSchema& schema) {
  if (rows.size() < 2) throw DataError("standardizer needs at least 2 rows");
  StandardizationStats stats;
  for (const auto& name : schema.continuous) {
    std::vector<double> values;
    for (const auto& row : rows) {
      const std::string* raw = Lookup(row, name);
      if (!raw) continue;
      double v;
      if (!ParseDouble(*raw, &v)) {
        throw SchemaError("covariate '" + name + "' of '" + row.image_id +
                          "' is not numeric: '" + *raw + "'");
      }
      values.push_back(v);
    }
    if (values.empty()) {
      spdlog::warn("covariate '{}' has no values; dropped", name);
      stats.dropped.push_back(name);
      continue;
    }
    double mean = 0;
    for (double v : values) mean += v;
    mean /= double(values.size());
    double var = 0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= double(values.size());
    const double sd = std::sqrt(var);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
      spdlog::warn("covariate '{}' is constant; dropped", name);
      stats.dropped.push_back(name);
      continue;
    }
    stats.names.push_back(name);
    stats.mean.push_back(mean);
    stats.stddev.push_back(sd);
  }
  return stats;
}

std::size_t EncodedSize(const CovariateSchema& schema, const StandardizationStats& stats) {
  std::size_t n = stats.names.size();
  for (const auto& c : schema.categorical) n += c.levels.size() + 1;
  return n;
}

std::vector<double> EncodeCovariates(const CovariateRow& row,
                                     const CovariateSchema& schema,
                                     const StandardizationStats& stats) {
  std::vector<double> out;
  out.reserve(EncodedSize(schema, stats));
  for (std::size_t i = 0; i < stats.names.size(); ++i) {
    const std::string* raw = Lookup(row, stats.names[i]);
    double v = stats.mean[i];
    if (raw && !ParseDouble(*raw, &v)) {
      throw SchemaError("covariate '" + stats.names[i] + "' of '" + row.image_id +
                        "' is not numeric: '" + *raw + "'");
    }
    out.push_back((v - stats.mean[i]) / stats.stddev[i]);
  }
  for (const auto& c : schema.categorical) {
    const std::string* raw = Lookup(row, c.name);
    std::size_t slot = c.levels.size();  // "other"
    for (std::size_t l = 0; raw && l < c.levels.size(); ++l) {
      if (c.levels[l] == *raw) slot = l;
    }
    for (std::size_t l = 0; l <= c.levels.size(); ++l) out.push_back(l == slot ? 1.0 : 0.0);
  }
  return out;
}

}  // namespace dermtriage::clinical
