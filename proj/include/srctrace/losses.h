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

#ifndef SRCTRACE_LOSSES_H_
#define SRCTRACE_LOSSES_H_

#include <span>
#include <vector>

#include "srctrace/linalg.h"
#include "srctrace/rng.h"

namespace srctrace {

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

// -sum_k t_k log softmax(logits)_k; gradient wrt logits is softmax - t.
LossAndGrad cross_entropy(std::span<const double> logits, std::size_t target);
LossAndGrad cross_entropy(std::span<const double> logits, std::span<const double> soft_target);

std::vector<double> one_hot(std::size_t index, std::size_t k);

struct MixupConfig {
  double eta = 1.0;     // weight of the mixed-sample term
  double alpha = 10.0;  // lambda ~ Beta(alpha, alpha)
};

struct MixedPair {
  std::vector<double> x;
  std::vector<double> y;
};

// (lambda x_i + (1-lambda) x_j, lambda y_i + (1-lambda) y_j)
MixedPair mixup_pair(std::span<const double> x_i, std::span<const double> y_i,
                     std::span<const double> x_j, std::span<const double> y_j, double lambda);

struct RegMixupResult {
  double loss = 0.0;
  std::vector<double> grad_clean;  // wrt logits of x_i
  std::vector<double> grad_mixed;  // wrt logits of the mixed sample
};

// CE(clean, y) + eta * CE(mixed, y_mixed).
RegMixupResult regmixup_loss(std::span<const double> clean_logits, std::span<const double> y,
                             std::span<const double> mixed_logits,
                             std::span<const double> y_mixed, const MixupConfig& cfg);

struct NpairConfig {
  double beta = 1.0;
  // L2-normalize embeddings before the inner products.
  bool normalize = false;
};

struct NpairResult {
  double loss = 0.0;
  std::vector<double> grad_anchor;
  std::vector<double> grad_positive;
  std::vector<std::vector<double>> grad_negatives;
};

// beta * log(1 + sum_i exp(x.x_i^- - x.x^+)), evaluated with a shifted
// log-sum-exp.
NpairResult npair_loss(std::span<const double> anchor, std::span<const double> positive,
                       const std::vector<std::span<const double>>& negatives,
                       const NpairConfig& cfg);

// Per-batch sampling decisions for the fake-dispersion loss, drawn once so
// the loss itself is a deterministic function of the model outputs.
struct FdBatchPlan {
  std::vector<std::size_t> partner;  // mixup partner of each row
  std::vector<double> lambda;        // mixup weight of each row

  struct Anchor {
    std::size_t anchor = 0;
    std::size_t positive = 0;
    std::vector<std::size_t> negatives;  // one per other class in the batch
  };
  std::vector<Anchor> anchors;
  std::size_t classes_present = 0;
};

// Partners are drawn uniformly from the batch with a fresh lambda per row.
// Every row whose class has a batchmate becomes an anchor with a uniformly
// drawn same-class positive.
FdBatchPlan plan_fd_batch(std::span<const std::size_t> labels, const MixupConfig& cfg, Rng& rng);

// Mixed inputs lambda_i x_i + (1 - lambda_i) x_partner(i).
Matrix mix_rows(const Matrix& x, const FdBatchPlan& plan);
// Mixed soft targets for the same plan.
Matrix mix_targets(std::span<const std::size_t> labels, std::size_t k, const FdBatchPlan& plan);

struct FdLossInputs {
  const Matrix& logits;        // clean rows, N x K
  const Matrix& embeddings;    // clean rows, N x D
  const Matrix& mixed_logits;  // N x K, from mix_rows(x, plan)
  std::span<const std::size_t> labels;
  const FdBatchPlan& plan;
  double beta = 0.0;
  MixupConfig mixup;
  bool normalize_npair = false;
};

struct FdLossResult {
  double loss = 0.0;
  double regmixup = 0.0;
  double npair = 0.0;
  bool npair_skipped = false;  // fewer than two classes or no positives
  Matrix grad_logits;
  Matrix grad_mixed_logits;
  Matrix grad_embeddings;
};

// Batch mean of RegMixup plus anchor mean of the N-pair term (which already
// carries beta).
FdLossResult fd_loss(const FdLossInputs& in);

struct OcSoftmaxParams {
  double alpha = 20.0;
  double m_real = 0.9;
  double m_fake = 0.2;
  std::vector<double> direction;  // unit norm
};

struct OcSoftmaxResult {
  double loss = 0.0;
  std::vector<double> grad_embedding;
  std::vector<double> grad_direction;
};

// One-class margin loss on the cosine between the embedding and the learned
// direction: softplus(alpha (m_real - s)) for real samples, softplus(alpha
// (s - m_fake)) for fake ones.
OcSoftmaxResult oc_softmax_loss(std::span<const double> embedding, bool is_real,
                                const OcSoftmaxParams& params);

void normalize_direction(OcSoftmaxParams& params);

struct BetaSchedule {
  int warmup_epochs = 20;
  double init = 1e-3;
  double final_value = 0.8;
  int final_epoch = 50;
};

// 0 through warmup, then linear from init (first epoch after warmup) to
// final_value at final_epoch, constant afterwards. Epochs are 1-based.
double beta_at(int epoch, const BetaSchedule& sched = {});

}  // namespace srctrace

#endif  // SRCTRACE_LOSSES_H_
