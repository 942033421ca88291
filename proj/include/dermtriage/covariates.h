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

#ifndef DERMTRIAGE_COVARIATES_H_
#define DERMTRIAGE_COVARIATES_H_

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace dermtriage::clinical {

struct CategoricalFeature {
  std::string name;
  std::vector<std::string> levels;
};

// Continuous features are standardized; categorical features are one-hot
// encoded with one extra trailing "other" slot for unseen or missing levels.
struct CovariateSchema {
  std::vector<std::string> continuous;
  std::vector<CategoricalFeature> categorical;

  void Validate() const;
  static CovariateSchema FromJson(const nlohmann::json& doc);
  nlohmann::json ToJson() const;
};

CovariateSchema LoadSchema(const std::string& path);

// One CSV row: raw string values keyed by column name. An empty or absent
// value is missing.
struct CovariateRow {
  std::string image_id;
  std::map<std::string, std::string> values;
};

// CSV with a header; must contain an `image_id` column and every schema
// column.
std::vector<CovariateRow> LoadCovariateCsv(const std::string& path,
                                           const CovariateSchema& schema);
void WriteCovariateCsv(const std::vector<CovariateRow>& rows,
                       const CovariateSchema& schema, const std::string& path);

struct StandardizationStats {
  std::vector<std::string> names;  // kept continuous features, schema order
  std::vector<double> mean;
  std::vector<double> stddev;      // population standard deviation
  std::vector<std::string> dropped;  // constant columns

  nlohmann::json ToJson() const;
  static StandardizationStats FromJson(const nlohmann::json& doc);
};

// Population mean/std over non-missing values. Constant columns are dropped
// with a logged warning. Throws DataError for fewer than 2 rows.
StandardizationStats FitStandardizer(const std::vector<CovariateRow>& rows,
                                     const CovariateSchema& schema);

std::size_t EncodedSize(const CovariateSchema& schema,
                        const StandardizationStats& stats);

// Standardized continuous values (missing -> 0, the training mean) followed
// by one-hot categorical blocks. Throws SchemaError naming a field whose
// value is not numeric.
std::vector<double> EncodeCovariates(const CovariateRow& row,
                                     const CovariateSchema& schema,
                                     const StandardizationStats& stats);

}  // namespace dermtriage::clinical

#endif  // DERMTRIAGE_COVARIATES_H_
