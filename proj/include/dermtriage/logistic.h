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

#ifndef DERMTRIAGE_LOGISTIC_H_
#define DERMTRIAGE_LOGISTIC_H_

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "dermtriage/covariates.h"
#include "dermtriage/manifest.h"

namespace dermtriage::clinical {

struct LogisticConfig {
  double l2 = 1.0;
  double tolerance = 1e-8;  // on the gradient norm
  int max_iterations = 100000;
};

// p(y=1|x) = sigmoid(w.x + b).
struct LogisticModel {
  Eigen::VectorXd weights;
  double intercept = 0;
  int iterations = 0;
  bool converged = false;

  double Predict(const Eigen::VectorXd& x) const;
  double Predict(const std::vector<double>& x) const;
  nlohmann::json ToJson() const;
  static LogisticModel FromJson(const nlohmann::json& j);
};

// Mean binary cross-entropy plus (l2 / 2n) |w|^2; the intercept is not
// penalized.
double LogisticLoss(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                    const Eigen::VectorXd& w, double b, double l2);
void LogisticGradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& w, double b, double l2,
                      Eigen::VectorXd* grad_w, double* grad_b);

// Full-batch gradient descent from zero with step 1/L, L the Lipschitz
// constant of the gradient. Throws DataError when only one class is present.
LogisticModel TrainLogistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                            const LogisticConfig& config = {});
LogisticModel TrainLogistic(const std::vector<std::vector<double>>& x,
                            const std::vector<int>& y, const LogisticConfig& config = {});

// Covariate-only model: encoder statistics plus logistic regression.
struct ClinicalModel {
  CovariateSchema schema;
  StandardizationStats stats;
  LogisticModel logistic;

  double Predict(const CovariateRow& row) const;
  void Save(const std::string& dir) const;
  static ClinicalModel Load(const std::string& dir);
};

// Fits the standardizer and the regression on the train-split images that
// have a covariate row (others are skipped with a warning).
ClinicalModel TrainClinical(const DatasetManifest& manifest,
                            const std::vector<CovariateRow>& rows,
                            const CovariateSchema& schema, const LogisticConfig& config = {});

}  // namespace dermtriage::clinical

#endif  // DERMTRIAGE_LOGISTIC_H_
