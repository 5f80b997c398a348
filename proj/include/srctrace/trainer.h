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

#ifndef SRCTRACE_TRAINER_H_
#define SRCTRACE_TRAINER_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "srctrace/linalg.h"
#include "srctrace/losses.h"
#include "srctrace/mlp.h"
#include "srctrace/rng.h"

namespace srctrace {

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 5e-4;
  double lr_decay = 0.5;
  std::vector<int> lr_decay_epochs = {30, 40};
  int epochs = 50;
  std::size_t batch_size = 64;
  // Micro-batches whose gradients are averaged before one optimizer step.
  std::size_t grad_accum = 1;
  std::uint64_t seed = 0;

  MixupConfig mixup;
  BetaSchedule beta;
  bool npair_enabled = true;
  bool normalize_npair = false;
  OcSoftmaxParams oc;  // direction is drawn at random when empty
};

void validate(const TrainConfig& cfg);

// Feature rows with class indices.
struct LabeledData {
  Matrix features;
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
};

// Rows of `data` at the given positions.
LabeledData subset(const LabeledData& data, std::span<const std::size_t> rows);

// Label of a real (bona fide) sample in the real-emphasis stage; fakes are 1.
inline constexpr std::size_t kRealLabel = 0;
inline constexpr std::size_t kFakeLabel = 1;

struct StageResult {
  MlpModel model;      // best-dev checkpoint
  OcSoftmaxParams oc;  // real-emphasis stage only
  std::vector<double> loss_trace;          // per epoch, sample-weighted mean
  std::vector<double> dev_accuracy_trace;  // per epoch
  std::vector<double> beta_trace;          // per epoch
  std::vector<double> step_losses;         // per optimizer micro-batch
  std::size_t npair_skipped_batches = 0;
  int best_epoch = 0;
  double best_dev_accuracy = -1.0;
};

// Loss and mean parameter gradient over one micro-batch.
struct BatchGradient {
  double loss = 0.0;
  MlpGrads grads;
  std::vector<double> grad_direction;  // OC-Softmax direction (real-emphasis only)
  std::size_t rows = 0;
};

// Binary cross-entropy on the two-way head plus OC-Softmax on the embedding,
// both averaged over the rows.
BatchGradient re_batch_gradient(const MlpModel& model, const OcSoftmaxParams& oc,
                                const Matrix& x, std::span<const std::size_t> labels);

// Fake-dispersion loss for a pre-drawn plan.
BatchGradient fd_batch_gradient(const MlpModel& model, const Matrix& x,
                                std::span<const std::size_t> labels, const FdBatchPlan& plan,
                                double beta, const TrainConfig& cfg, bool* npair_skipped = nullptr);

// Row-weighted mean of micro-batch gradients; equals the gradient of the
// concatenated batch for per-row mean losses.
BatchGradient combine(const std::vector<BatchGradient>& parts);

// Batches in which every class is spread proportionally; a batch that would
// hold a single class is merged into its neighbour.
std::vector<std::vector<std::size_t>> stratified_batches(std::span<const std::size_t> labels,
                                                         std::size_t batch_size, Rng& rng);

double classification_accuracy(const MlpModel& model, const LabeledData& data);

// Real-emphasis stage: labels must be kRealLabel / kFakeLabel and the model
// must have a two-way head.
StageResult train_re(const MlpModel& init, const LabeledData& train, const LabeledData& dev,
                     const TrainConfig& cfg);

// Fake-dispersion stage with the scheduled N-pair weight.
StageResult train_fd(const MlpModel& init, const LabeledData& train, const LabeledData& dev,
                     const TrainConfig& cfg);

}  // namespace srctrace

#endif  // SRCTRACE_TRAINER_H_
