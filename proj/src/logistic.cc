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

#include "dermtriage/logistic.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include <spdlog/spdlog.h>

#include "dermtriage/error.h"

namespace dermtriage::clinical {
namespace {

Eigen::VectorXd Sigmoid(const Eigen::VectorXd& z) {
  Eigen::VectorXd out(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    out[i] = z[i] >= 0 ? 1.0 / (1.0 + std::exp(-z[i])) : std::exp(z[i]) / (1.0 + std::exp(z[i]));
  }
  return out;
}

// Largest eigenvalue of A^T A / n by power iteration, A = [X 1].
double GramNorm(const Eigen::MatrixXd& x) {
  const Eigen::Index d = x.cols();
  Eigen::VectorXd v = Eigen::VectorXd::Ones(d + 1);
  v.normalize();
  double lambda = 0;
  for (int it = 0; it < 200; ++it) {
    const Eigen::VectorXd av = x * v.head(d) + Eigen::VectorXd::Constant(x.rows(), v[d]);
    Eigen::VectorXd next(d + 1);
    next.head(d) = x.transpose() * av;
    next[d] = av.sum();
    next /= double(x.rows());
    const double norm = next.norm();
    if (norm == 0) return 0;
    const double prev = lambda;
    lambda = norm;
    v = next / norm;
    if (std::abs(lambda - prev) <= 1e-10 * lambda) break;
  }
  return lambda;
}

}  // namespace

double LogisticModel::Predict(const Eigen::VectorXd& x) const {
  if (x.size() != weights.size()) throw DataError("covariate vector has the wrong length");
  const double z = weights.dot(x) + intercept;
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

double LogisticModel::Predict(const std::vector<double>& x) const {
  return Predict(Eigen::Map<const Eigen::VectorXd>(x.data(), Eigen::Index(x.size())));
}

nlohmann::json LogisticModel::ToJson() const {
  return {{"weights", std::vector<double>(weights.data(), weights.data() + weights.size())},
          {"intercept", intercept},
          {"iterations", iterations},
          {"converged", converged}};
}

LogisticModel LogisticModel::FromJson(const nlohmann::json& j) {
  try {
    LogisticModel m;
    const auto w = j.at("weights").get<std::vector<double>>();
    m.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), Eigen::Index(w.size()));
    m.intercept = j.at("intercept").get<double>();
    m.iterations = j.value("iterations", 0);
    m.converged = j.value("converged", false);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("logistic model: ") + e.what());
  }
}

double LogisticLoss(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                    const Eigen::VectorXd& w, double b, double l2) {
  const Eigen::VectorXd z = (x * w).array() + b;
  double sum = 0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    sum += std::max(z[i], 0.0) - z[i] * y[i] + std::log1p(std::exp(-std::abs(z[i])));
  }
  return (sum + 0.5 * l2 * w.squaredNorm()) / double(x.rows());
}

void LogisticGradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& w, double b, double l2,
                      Eigen::VectorXd* grad_w, double* grad_b) {
  const double n = double(x.rows());
  const Eigen::VectorXd r = Sigmoid((x * w).array() + b) - y;
  *grad_w = (x.transpose() * r + l2 * w) / n;
  *grad_b = r.sum() / n;
}

LogisticModel TrainLogistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                            const LogisticConfig& config) {
  if (x.rows() == 0 || x.rows() != y.size()) throw DataError("logistic: bad training shapes");
  if (config.l2 < 0) throw ConfigError("logistic: l2 must be non-negative");
  const double positives = y.sum();
  if (positives == 0 || positives == double(y.size())) {
    throw DataError("logistic regression needs both classes in the training set");
  }
  // Hessian of the mean BCE is bounded by A^T A / (4n); l2 adds l2 / n.
  const double lipschitz = 0.25 * GramNorm(x) + config.l2 / double(x.rows());
  const double step = lipschitz > 0 ? 1.0 / lipschitz : 1.0;
  LogisticModel m;
  m.weights = Eigen::VectorXd::Zero(x.cols());
  Eigen::VectorXd gw;
  double gb = 0;
  for (m.iterations = 0; m.iterations < config.max_iterations; ++m.iterations) {
    LogisticGradient(x, y, m.weights, m.intercept, config.l2, &gw, &gb);
    if (std::sqrt(gw.squaredNorm() + gb * gb) < config.tolerance) {
      m.converged = true;
      break;
    }
    m.weights -= step * gw;
    m.intercept -= step * gb;
  }
  if (!m.converged) {
    spdlog::warn("logistic regression stopped after {} iterations without converging",
                 m.iterations);
  }
  return m;
}

LogisticModel TrainLogistic(const std::vector<std::vector<double>>& x,
                            const std::vector<int>& y, const LogisticConfig& config) {
  if (x.empty() || x.size() != y.size()) throw DataError("logistic: bad training shapes");
  Eigen::MatrixXd mx(Eigen::Index(x.size()), Eigen::Index(x[0].size()));
  Eigen::VectorXd vy(Eigen::Index(y.size()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].size() != x[0].size()) throw DataError("logistic: ragged covariate rows");
    for (std::size_t j = 0; j < x[i].size(); ++j) mx(Eigen::Index(i), Eigen::Index(j)) = x[i][j];
    vy[Eigen::Index(i)] = y[i];
  }
  return TrainLogistic(mx, vy, config);
}

double ClinicalModel::Predict(const CovariateRow& row) const {
  return logistic.Predict(EncodeCovariates(row, schema, stats));
}

void ClinicalModel::Save(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json doc = {{"type", "clinical_logistic"},
                        {"schema", schema.ToJson()},
                        {"standardization", stats.ToJson()},
                        {"logistic", logistic.ToJson()}};
  std::ofstream(std::filesystem::path(dir) / "model.json") << doc.dump(2) << "\n";
}

ClinicalModel ClinicalModel::Load(const std::string& dir) {
  std::ifstream in(std::filesystem::path(dir) / "model.json");
  if (!in) throw ModelError("no clinical model in '" + dir + "'");
  try {
    const auto doc = nlohmann::json::parse(in);
    if (doc.value("type", "") != "clinical_logistic") {
      throw ModelError("'" + dir + "' is not a clinical model");
    }
    return {CovariateSchema::FromJson(doc.at("schema")),
            StandardizationStats::FromJson(doc.at("standardization")),
            LogisticModel::FromJson(doc.at("logistic"))};
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("clinical model: ") + e.what());
  }
}

ClinicalModel TrainClinical(const DatasetManifest& manifest, const std::vector<CovariateRow>& rows,
                            const CovariateSchema& schema, const LogisticConfig& config) {
  schema.Validate();
  std::map<std::string, const CovariateRow*> by_id;
  for (const auto& r : rows) by_id[r.image_id] = &r;
  std::vector<const ImageRecord*> records;
  if (manifest.splits.empty()) {
    for (const auto& r : manifest.records) records.push_back(&r);
  } else {
    records = manifest.InSplit(Split::kTrain);
  }
  std::vector<CovariateRow> train;
  std::vector<int> labels;
  int missing = 0;
  for (const auto* r : records) {
    auto it = by_id.find(r->image_id);
    if (it == by_id.end()) {
      ++missing;
      continue;
    }
    train.push_back(*it->second);
    labels.push_back(r->ImageLabel());
  }
  if (missing > 0) spdlog::warn("{} training images have no covariate row and were excluded", missing);
  if (train.empty()) throw DataError("no training image has a covariate row");
  ClinicalModel m{schema, FitStandardizer(train, schema), {}};
  std::vector<std::vector<double>> x;
  for (const auto& r : train) x.push_back(EncodeCovariates(r, schema, m.stats));
  m.logistic = TrainLogistic(x, labels, config);
  return m;
}

}  // namespace dermtriage::clinical
