// Copyright 2026 The srctrace Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SRCTRACE_METRICS_H_
#define SRCTRACE_METRICS_H_

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "srctrace/linalg.h"

namespace srctrace {

// Row-stochastic class probabilities with ground-truth class indices.
struct PredictionBatch {
  Matrix probs;
  std::vector<std::size_t> true_idx;

  std::size_t size() const { return true_idx.size(); }
  std::size_t num_classes() const { return probs.cols(); }
};

// Throws ValidationError when rows are not distributions or labels are out
// of range; DegenerateInputError when empty.
void validate(const PredictionBatch& batch);

// Numerically stable row-wise softmax.
Matrix softmax_rows(const Matrix& logits);
std::vector<double> softmax(std::span<const double> logits);

// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

struct EceConfig {
  std::size_t m_bins = 10;
};

struct MetricReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::optional<double> eer;
  double nll = 0.0;
  double ece = 0.0;
  std::optional<double> frechet;
};

// Flat object with keys accuracy, macro_f1, eer, nll, ece, frechet. Absent
// optionals are written as null.
nlohmann::ordered_json to_json(const MetricReport& report);
MetricReport report_from_json(const nlohmann::json& j);
// Header line plus one value line.
std::string to_csv(const MetricReport& report);

double accuracy(const PredictionBatch& batch);
// Unweighted mean of per-class F1 over classes that occur in the predictions
// or the truths.
double macro_f1(const PredictionBatch& batch);
double nll(const PredictionBatch& batch);
double ece(const PredictionBatch& batch, const EceConfig& cfg = {});

// Bin of a confidence under equal-width (lo, hi] bins; 0 goes to bin 0.
std::size_t ece_bin(double confidence, std::size_t m_bins);

// Equal error rate for a detector that accepts score >= threshold.
// `threshold` is a score cut that realizes (or sits at) the crossing point.
struct EerPoint {
  double eer = 0.0;
  double threshold = 0.0;
};

EerPoint eer_operating_point(std::span<const double> scores, const std::vector<bool>& is_target);
double eer(std::span<const double> scores, const std::vector<bool>& is_target);

// Fréchet distance between two Gaussians. The square-root term is evaluated
// as sqrt(A^{1/2} B A^{1/2}), which has the same trace as (AB)^{1/2}.
double frechet_distance(const MeanCov& a, const MeanCov& b);

// Mean distance between class centroids over mean distance of samples to
// their own centroid. Needs at least two classes.
double centroid_distance_ratio(const Matrix& embeddings, std::span<const std::size_t> labels);

}  // namespace srctrace

#endif  // SRCTRACE_METRICS_H_
