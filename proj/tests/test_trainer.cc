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

#include "srctrace/trainer.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "gtest/gtest.h"
#include "srctrace/error.h"
#include "srctrace/optim.h"
#include "test_util.h"

namespace srctrace {
namespace {

// k Gaussian blobs around random centers at the given distance from the origin.
LabeledData blobs(std::uint64_t seed, std::size_t k, std::size_t per_class, std::size_t dim,
                  double separation, std::uint64_t noise_stream = 0) {
  Rng centers_rng(seed);
  Matrix centers(k, dim);
  for (std::size_t c = 0; c < k; ++c) {
    double norm = 0;
    for (std::size_t j = 0; j < dim; ++j) norm += std::pow(centers(c, j) = centers_rng.normal(), 2);
    for (std::size_t j = 0; j < dim; ++j) centers(c, j) *= separation / std::sqrt(norm);
  }
  Rng rng(derive_seed(seed, "noise" + std::to_string(noise_stream)));
  LabeledData d;
  d.num_classes = k;
  d.features = Matrix(k * per_class, dim);
  for (std::size_t i = 0; i < k * per_class; ++i) {
    const std::size_t c = i % k;
    d.labels.push_back(c);
    for (std::size_t j = 0; j < dim; ++j) d.features(i, j) = centers(c, j) + rng.normal();
  }
  return d;
}

// Same centers as blobs(seed, ...) with fresh noise.
LabeledData blobs_dev(std::uint64_t seed, std::size_t k, std::size_t per_class, std::size_t dim,
                      double separation) {
  return blobs(seed, k, per_class, dim, separation, 1);
}

TrainConfig quick_config(int epochs) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 32;
  cfg.seed = 3;
  return cfg;
}

TEST(Adam, ZeroGradientNoDecayIsNoop) {
  Matrix p = Matrix::from_rows({{1.0, -2.0}});
  const Matrix g(1, 2);
  AdamState s;
  adam_step({&p}, {&g}, s, {1e-3, 0.9, 0.999, 1e-8, 0.0});
  EXPECT_EQ(p, Matrix::from_rows({{1.0, -2.0}}));
}

TEST(Adam, FirstStepClosedForm) {
  Matrix p = Matrix::from_rows({{0.0, 0.0, 0.0}});
  const Matrix g = Matrix::from_rows({{0.5, -3.0, 1e-9}});
  AdamState s;
  adam_step({&p}, {&g}, s, {1e-3, 0.9, 0.999, 1e-8, 0.0});
  for (std::size_t j = 0; j < 3; ++j) {
    const double gj = g(0, j);
    EXPECT_NEAR(p(0, j), -1e-3 * gj / (std::abs(gj) + 1e-8), 1e-15);
  }
}

TEST(Adam, DecoupledWeightDecay) {
  Matrix p = Matrix::from_rows({{2.0, -4.0}});
  const Matrix g(1, 2);
  AdamState s;
  adam_step({&p}, {&g}, s, {1e-2, 0.9, 0.999, 1e-8, 0.5});
  EXPECT_DOUBLE_EQ(p(0, 0), 2.0 * (1 - 1e-2 * 0.5));
  EXPECT_DOUBLE_EQ(p(0, 1), -4.0 * (1 - 1e-2 * 0.5));
}

TEST(Adam, NonFiniteGradientLeavesStateUntouched) {
  Matrix p = Matrix::from_rows({{1.0}});
  const Matrix g = Matrix::from_rows({{NAN}});
  AdamState s;
  EXPECT_THROW(adam_step({&p}, {&g}, s, {}), NumericalError);
  EXPECT_EQ(p(0, 0), 1.0);
  EXPECT_EQ(s.step, 0);
}

TEST(LrSchedule, HalvesAtMilestones) {
  const std::vector<int> ms{30, 40};
  EXPECT_EQ(lr_at(1, 1e-3, 0.5, ms), 1e-3);
  EXPECT_EQ(lr_at(29, 1e-3, 0.5, ms), 1e-3);
  EXPECT_EQ(lr_at(30, 1e-3, 0.5, ms), 5e-4);
  EXPECT_EQ(lr_at(40, 1e-3, 0.5, ms), 2.5e-4);
  EXPECT_EQ(lr_at(50, 1e-3, 0.5, ms), 2.5e-4);
}

TEST(StratifiedBatches, PartitionWithMixedClasses) {
  Rng rng(1);
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < 203; ++i) labels.push_back(i < 150 ? i % 3 : 3);
  const auto batches = stratified_batches(labels, 16, rng);
  std::vector<std::size_t> seen;
  for (const auto& b : batches) {
    std::set<std::size_t> classes;
    for (std::size_t i : b) classes.insert(labels[i]);
    EXPECT_GE(classes.size(), 2u);
    seen.insert(seen.end(), b.begin(), b.end());
  }
  std::sort(seen.begin(), seen.end());
  ASSERT_EQ(seen.size(), labels.size());
  for (std::size_t i = 0; i < seen.size(); ++i) EXPECT_EQ(seen[i], i);
}

TEST(TrainRe, SeparableBlobsReachHighDevAccuracy) {
  const LabeledData train = blobs(11, 2, 100, 8, 4.0);
  const LabeledData dev = blobs_dev(11, 2, 50, 8, 4.0);
  Rng rng(2);
  const MlpModel init = MlpModel::random({8, 16, 12, 2}, rng);
  TrainConfig cfg = quick_config(50);
  cfg.lr = 1e-2;
  const StageResult r = train_re(init, train, dev, cfg);
  EXPECT_GE(r.best_dev_accuracy, 0.99);
  EXPECT_EQ(r.loss_trace.size(), 50u);
  double norm = 0;
  for (double v : r.oc.direction) norm += v * v;
  EXPECT_NEAR(norm, 1.0, 1e-12);
}

TEST(TrainRe, ZeroLearningRateKeepsParameters) {
  const LabeledData train = blobs(12, 2, 40, 6, 3.0);
  Rng rng(3);
  const MlpModel init = MlpModel::random({6, 8, 2}, rng);
  TrainConfig cfg = quick_config(3);
  cfg.lr = 0.0;
  const StageResult r = train_re(init, train, train, cfg);
  EXPECT_EQ(r.model, init);
  for (double l : r.loss_trace) EXPECT_DOUBLE_EQ(l, r.loss_trace.front());
}

TEST(TrainRe, OneEpochOneTraceEntry) {
  const LabeledData train = blobs(13, 2, 20, 4, 3.0);
  Rng rng(4);
  const StageResult r = train_re(MlpModel::random({4, 6, 2}, rng), train, train, quick_config(1));
  EXPECT_EQ(r.loss_trace.size(), 1u);
  EXPECT_EQ(r.dev_accuracy_trace.size(), 1u);
}

TEST(TrainRe, SingleClassRejected) {
  LabeledData train = blobs(14, 2, 10, 4, 3.0);
  std::fill(train.labels.begin(), train.labels.end(), kFakeLabel);
  Rng rng(5);
  EXPECT_THROW(train_re(MlpModel::random({4, 6, 2}, rng), train, train, quick_config(1)), DegenerateInputError);
}

TEST(TrainFd, FiveSourceClustersReachHighDevAccuracy) {
  const LabeledData train = blobs(21, 5, 60, 16, 5.0);
  const LabeledData dev = blobs_dev(21, 5, 30, 16, 5.0);
  Rng rng(6);
  const MlpModel init = MlpModel::random({16, 32, 24, 5}, rng);
  const StageResult r = train_fd(init, train, dev, quick_config(50));
  EXPECT_GE(r.best_dev_accuracy, 0.95);
  ASSERT_EQ(r.beta_trace.size(), 50u);
  EXPECT_EQ(r.beta_trace[19], 0.0);
  EXPECT_DOUBLE_EQ(r.beta_trace[20], 1e-3);
  EXPECT_DOUBLE_EQ(r.beta_trace[49], 0.8);
}

TEST(TrainFd, BestCheckpointInvariant) {
  const LabeledData train = blobs(22, 3, 30, 8, 2.0);
  const LabeledData dev = blobs_dev(22, 3, 20, 8, 2.0);
  Rng rng(7);
  const StageResult r = train_fd(MlpModel::random({8, 12, 10, 3}, rng), train, dev, quick_config(15));
  const double best = *std::max_element(r.dev_accuracy_trace.begin(), r.dev_accuracy_trace.end());
  EXPECT_EQ(r.best_dev_accuracy, best);
  EXPECT_EQ(classification_accuracy(r.model, dev), best);
  EXPECT_EQ(r.dev_accuracy_trace[r.best_epoch - 1], best);
}

TEST(TrainFd, ZeroBetaEqualsRegMixupOnly) {
  const LabeledData train = blobs(23, 3, 30, 6, 3.0);
  Rng rng(8);
  const MlpModel init = MlpModel::random({6, 10, 8, 3}, rng);
  TrainConfig zero_beta = quick_config(25);
  zero_beta.beta.warmup_epochs = 1000;
  TrainConfig no_npair = quick_config(25);
  no_npair.npair_enabled = false;
  const StageResult a = train_fd(init, train, train, zero_beta);
  const StageResult b = train_fd(init, train, train, no_npair);
  ASSERT_EQ(a.step_losses.size(), b.step_losses.size());
  for (std::size_t i = 0; i < a.step_losses.size(); ++i) EXPECT_NEAR(a.step_losses[i], b.step_losses[i], 1e-12);
}

TEST(TrainFd, DeterministicUnderSeed) {
  const LabeledData train = blobs(24, 3, 30, 6, 3.0);
  Rng r1(9), r2(9);
  const StageResult a = train_fd(MlpModel::random({6, 10, 8, 3}, r1), train, train, quick_config(25));
  const StageResult b = train_fd(MlpModel::random({6, 10, 8, 3}, r2), train, train, quick_config(25));
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  EXPECT_EQ(a.step_losses, b.step_losses);
}

TEST(TrainFd, HeadSizeMustMatchClasses) {
  const LabeledData train = blobs(25, 3, 10, 4, 3.0);
  Rng rng(10);
  EXPECT_THROW(train_fd(MlpModel::random({4, 6, 2}, rng), train, train, quick_config(1)), ShapeError);
}

TEST(Training, NonFiniteGradientNamesEpochAndBatch) {
  LabeledData train = blobs(26, 2, 10, 4, 3.0);
  for (double& v : train.features.values()) v = std::numeric_limits<double>::infinity();
  Rng rng(11);
  try {
    train_fd(MlpModel::random({4, 6, 2}, rng), train, train, quick_config(1));
    FAIL() << "expected a numerical error";
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch 1"), std::string::npos) << msg;
  }
}

// Micro-batch accumulation equals the gradient of the concatenated batch.
TEST(GradAccumulation, MatchesLargeBatch) {
  Rng rng(12);
  const MlpModel m = MlpModel::random({5, 8, 6, 2}, rng);
  const Matrix x = testing_util::random_matrix(rng, 24, 5);
  std::vector<std::size_t> y(24);
  for (std::size_t i = 0; i < 24; ++i) y[i] = i % 2;
  OcSoftmaxParams oc;
  oc.direction = {1, 0, 0, 0, 0, 0};

  const BatchGradient whole = re_batch_gradient(m, oc, x, y);
  std::vector<BatchGradient> parts;
  for (std::size_t start : {0u, 8u, 16u}) {
    Matrix xs(8, 5);
    for (std::size_t i = 0; i < 8; ++i) {
      for (std::size_t j = 0; j < 5; ++j) xs(i, j) = x(start + i, j);
    }
    parts.push_back(re_batch_gradient(m, oc, xs, std::vector<std::size_t>(y.begin() + start, y.begin() + start + 8)));
  }
  const BatchGradient acc = combine(parts);
  EXPECT_NEAR(acc.loss, whole.loss, 1e-12);
  const auto a = MlpModel::tensors(acc.grads);
  const auto w = MlpModel::tensors(whole.grads);
  for (std::size_t t = 0; t < a.size(); ++t) {
    EXPECT_LE(testing_util::relative_frobenius(*a[t], *w[t]), 1e-8) << "tensor " << t;
  }
  for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(acc.grad_direction[j], whole.grad_direction[j], 1e-12);
}

TEST(GradAccumulation, TrainingWithAccumulationStillLearns) {
  const LabeledData train = blobs(27, 3, 40, 6, 4.0);
  Rng rng(13);
  TrainConfig cfg = quick_config(20);
  cfg.batch_size = 8;
  cfg.grad_accum = 4;
  cfg.lr = 1e-2;  // four times fewer optimizer steps than without accumulation
  const StageResult r = train_fd(MlpModel::random({6, 10, 8, 3}, rng), train, train, cfg);
  EXPECT_GT(r.best_dev_accuracy, 0.9);
}

}  // namespace
}  // namespace srctrace
