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
#include <iostream>
#include <numeric>
#include <set>
#include <utility>

#include "srctrace/error.h"
#include "srctrace/metrics.h"
#include "srctrace/optim.h"

namespace srctrace {
namespace {

Matrix rows_of(const Matrix& x, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = x.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

std::vector<std::size_t> labels_of(std::span<const std::size_t> labels,
                                   std::span<const std::size_t> rows) {
  std::vector<std::size_t> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(labels[r]);
  return out;
}

std::size_t distinct(std::span<const std::size_t> labels) {
  return std::set<std::size_t>(labels.begin(), labels.end()).size();
}

void require_data(const LabeledData& data, std::size_t input_dim, const char* what) {
  if (data.features.rows() != data.labels.size()) {
    throw ShapeError(std::string(what) + ": feature rows do not match labels");
  }
  if (data.size() == 0) throw DegenerateInputError(std::string(what) + ": no samples");
  if (data.features.cols() != input_dim) {
    throw ShapeError(std::string(what) + ": feature dimension does not match the model input");
  }
  for (std::size_t y : data.labels) {
    if (y >= data.num_classes) throw ValidationError(std::string(what) + ": label out of range");
  }
}

// Shared epoch loop. `step_gradient` computes the gradient of one batch,
// `after_step` runs after every optimizer step and `on_best` whenever the dev
// accuracy improves.
template <typename StepFn, typename AfterStepFn, typename OnBestFn>
void run_epochs(MlpModel& model, const LabeledData& train, const LabeledData& dev,
                const TrainConfig& cfg, Rng& rng, std::vector<Matrix>& extra_params,
                StepFn&& step_gradient, AfterStepFn&& after_step, OnBestFn&& on_best,
                StageResult& result, const char* stage_name) {
  AdamState state;
  AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    adam.lr = lr_at(epoch, cfg.lr, cfg.lr_decay, cfg.lr_decay_epochs);
    const auto batches = stratified_batches(train.labels, cfg.batch_size, rng);
    double epoch_loss = 0.0;
    std::vector<BatchGradient> pending;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const Matrix x = rows_of(train.features, batches[b]);
      const auto y = labels_of(train.labels, batches[b]);
      BatchGradient part = step_gradient(epoch, x, y);
      epoch_loss += part.loss * static_cast<double>(part.rows);
      result.step_losses.push_back(part.loss);
      pending.push_back(std::move(part));
      if (pending.size() < cfg.grad_accum && b + 1 < batches.size()) continue;

      BatchGradient g = combine(pending);
      pending.clear();
      std::vector<Matrix*> params = model.parameters();
      std::vector<const Matrix*> grads = MlpModel::tensors(g.grads);
      Matrix direction_grad;
      if (!extra_params.empty()) {
        direction_grad = Matrix(1, g.grad_direction.size());
        std::copy(g.grad_direction.begin(), g.grad_direction.end(), direction_grad.row(0).begin());
        params.push_back(&extra_params[0]);
        grads.push_back(&direction_grad);
      }
      try {
        adam_step(params, grads, state, adam);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(stage_name) + " epoch " + std::to_string(epoch) + " batch " +
                             std::to_string(b + 1) + ": " + e.what());
      }
      after_step();
    }
    result.loss_trace.push_back(epoch_loss / static_cast<double>(train.size()));
    const double dev_acc = classification_accuracy(model, dev);
    result.dev_accuracy_trace.push_back(dev_acc);
    if (dev_acc > result.best_dev_accuracy) {
      result.best_dev_accuracy = dev_acc;
      result.best_epoch = epoch;
      result.model = model;
      on_best();
    }
  }
}

}  // namespace

void validate(const TrainConfig& cfg) {
  if (!(cfg.lr >= 0.0)) throw ValidationError("train config: lr must be non-negative");
  if (!(cfg.weight_decay >= 0.0)) throw ValidationError("train config: weight_decay must be non-negative");
  if (!(cfg.lr_decay > 0.0)) throw ValidationError("train config: lr_decay must be positive");
  if (cfg.epochs < 1) throw ValidationError("train config: epochs must be at least 1");
  if (cfg.batch_size < 2) throw ValidationError("train config: batch_size must be at least 2");
  if (cfg.grad_accum < 1) throw ValidationError("train config: grad_accum must be at least 1");
  if (cfg.mixup.eta < 0.0) throw ValidationError("train config: mixup eta must be non-negative");
  if (!(cfg.mixup.alpha > 0.0)) throw ValidationError("train config: mixup alpha must be positive");
  if (!(cfg.oc.m_real > cfg.oc.m_fake)) throw ValidationError("train config: need oc m_real > m_fake");
}

LabeledData subset(const LabeledData& data, std::span<const std::size_t> rows) {
  LabeledData out;
  out.features = rows_of(data.features, rows);
  out.labels = labels_of(data.labels, rows);
  out.num_classes = data.num_classes;
  return out;
}

BatchGradient re_batch_gradient(const MlpModel& model, const OcSoftmaxParams& oc, const Matrix& x,
                                std::span<const std::size_t> labels) {
  const std::size_t n = labels.size();
  if (n == 0 || x.rows() != n) throw ShapeError("re_batch_gradient: batch shape");
  if (model.output_dim() != 2) throw ShapeError("re_batch_gradient: model needs a two-way head");
  const ForwardCache cache = model.forward(x);
  const Matrix& logits = cache.logits();
  const Matrix& emb = cache.embedding();
  Matrix grad_logits(n, 2);
  Matrix grad_emb(n, emb.cols());
  BatchGradient out;
  out.rows = n;
  out.grad_direction.assign(emb.cols(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] > 1) throw ValidationError("re_batch_gradient: labels must be binary");
    const auto ce = cross_entropy(logits.row(i), labels[i]);
    const auto oc_r = oc_softmax_loss(emb.row(i), labels[i] == kRealLabel, oc);
    out.loss += (ce.loss + oc_r.loss) * inv_n;
    for (std::size_t k = 0; k < 2; ++k) grad_logits(i, k) = ce.grad[k] * inv_n;
    for (std::size_t j = 0; j < emb.cols(); ++j) {
      grad_emb(i, j) = oc_r.grad_embedding[j] * inv_n;
      out.grad_direction[j] += oc_r.grad_direction[j] * inv_n;
    }
  }
  out.grads = model.backward(cache, grad_logits, &grad_emb);
  return out;
}

BatchGradient fd_batch_gradient(const MlpModel& model, const Matrix& x,
                                std::span<const std::size_t> labels, const FdBatchPlan& plan,
                                double beta, const TrainConfig& cfg, bool* npair_skipped) {
  const ForwardCache clean = model.forward(x);
  const ForwardCache mixed = model.forward(mix_rows(x, plan));
  const FdLossResult r = fd_loss({clean.logits(), clean.embedding(), mixed.logits(), labels, plan,
                                  beta, cfg.mixup, cfg.normalize_npair});
  if (npair_skipped != nullptr) *npair_skipped = r.npair_skipped;
  BatchGradient out;
  out.loss = r.loss;
  out.rows = labels.size();
  out.grads = model.backward(clean, r.grad_logits, &r.grad_embeddings);
  out.grads.add(model.backward(mixed, r.grad_mixed_logits));
  return out;
}

BatchGradient combine(const std::vector<BatchGradient>& parts) {
  if (parts.empty()) throw DegenerateInputError("combine: no micro-batches");
  if (parts.size() == 1) return parts.front();
  std::size_t total = 0;
  for (const auto& p : parts) total += p.rows;
  BatchGradient out;
  out.rows = total;
  out.grads = parts.front().grads;
  out.grads.scale(0.0);
  out.grad_direction.assign(parts.front().grad_direction.size(), 0.0);
  for (const auto& p : parts) {
    const double w = static_cast<double>(p.rows) / static_cast<double>(total);
    out.loss += w * p.loss;
    out.grads.add(p.grads, w);
    for (std::size_t j = 0; j < out.grad_direction.size(); ++j) out.grad_direction[j] += w * p.grad_direction[j];
  }
  return out;
}

std::vector<std::vector<std::size_t>> stratified_batches(std::span<const std::size_t> labels,
                                                         std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ValidationError("stratified_batches: batch_size must be positive");
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= members.size()) members.resize(labels[i] + 1);
    members[labels[i]].push_back(i);
  }
  // Key (rank + jitter) / class size spreads each class evenly over the epoch.
  std::vector<std::pair<double, std::size_t>> keyed;
  keyed.reserve(labels.size());
  for (auto& rows : members) {
    rng.shuffle(rows);
    const double size = static_cast<double>(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      keyed.emplace_back((static_cast<double>(r) + rng.uniform()) / size, rows[r]);
    }
  }
  std::sort(keyed.begin(), keyed.end());

  std::vector<std::vector<std::size_t>> batches;
  std::vector<bool> batch_mixed;
  for (std::size_t start = 0; start < keyed.size(); start += batch_size) {
    std::vector<std::size_t> chunk;
    for (std::size_t i = start; i < std::min(keyed.size(), start + batch_size); ++i) {
      chunk.push_back(keyed[i].second);
    }
    const bool chunk_mixed = distinct(labels_of(labels, chunk)) >= 2;
    if (!batches.empty() && (!chunk_mixed || !batch_mixed.back())) {
      batches.back().insert(batches.back().end(), chunk.begin(), chunk.end());
      batch_mixed.back() = distinct(labels_of(labels, batches.back())) >= 2;
    } else {
      batches.push_back(std::move(chunk));
      batch_mixed.push_back(chunk_mixed);
    }
  }
  return batches;
}

double classification_accuracy(const MlpModel& model, const LabeledData& data) {
  if (data.size() == 0) throw DegenerateInputError("classification_accuracy: no samples");
  const ForwardCache cache = model.forward(data.features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (argmax(cache.logits().row(i)) == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

StageResult train_re(const MlpModel& init, const LabeledData& train, const LabeledData& dev,
                     const TrainConfig& cfg) {
  validate(cfg);
  if (init.output_dim() != 2) throw ShapeError("train_re: model needs a two-way head");
  require_data(train, init.input_dim(), "train_re train split");
  require_data(dev, init.input_dim(), "train_re dev split");
  if (train.num_classes != 2) throw ValidationError("train_re: labels must be binary real/fake");
  if (distinct(train.labels) < 2) throw DegenerateInputError("train_re: training data has a single class");

  Rng rng(derive_seed(cfg.seed, "train_re"));
  MlpModel model = init;
  OcSoftmaxParams oc = cfg.oc;
  if (oc.direction.empty()) {
    oc.direction.resize(model.embedding_dim());
    for (double& v : oc.direction) v = rng.normal();
  }
  if (oc.direction.size() != model.embedding_dim()) {
    throw ShapeError("train_re: OC-Softmax direction does not match the embedding dimension");
  }
  normalize_direction(oc);

  std::vector<Matrix> direction(1, Matrix(1, oc.direction.size()));
  std::copy(oc.direction.begin(), oc.direction.end(), direction[0].row(0).begin());

  StageResult result;
  OcSoftmaxParams best_oc = oc;
  run_epochs(
      model, train, dev, cfg, rng, direction,
      [&](int, const Matrix& x, const std::vector<std::size_t>& y) {
        return re_batch_gradient(model, oc, x, y);
      },
      [&] {
        const auto row = direction[0].row(0);
        oc.direction.assign(row.begin(), row.end());
        normalize_direction(oc);
        std::copy(oc.direction.begin(), oc.direction.end(), direction[0].row(0).begin());
      },
      [&] { best_oc = oc; }, result, "train_re");
  result.oc = best_oc;
  result.beta_trace.assign(result.loss_trace.size(), 0.0);
  return result;
}

StageResult train_fd(const MlpModel& init, const LabeledData& train, const LabeledData& dev,
                     const TrainConfig& cfg) {
  validate(cfg);
  if (train.num_classes < 2) throw ValidationError("train_fd: need at least two source classes");
  if (init.output_dim() != train.num_classes) {
    throw ShapeError("train_fd: model head has " + std::to_string(init.output_dim()) +
                     " outputs for " + std::to_string(train.num_classes) + " classes");
  }
  require_data(train, init.input_dim(), "train_fd train split");
  require_data(dev, init.input_dim(), "train_fd dev split");

  Rng rng(derive_seed(cfg.seed, "train_fd"));
  MlpModel model = init;
  StageResult result;
  std::vector<Matrix> no_extra;
  run_epochs(
      model, train, dev, cfg, rng, no_extra,
      [&](int epoch, const Matrix& x, const std::vector<std::size_t>& y) {
        const double beta = cfg.npair_enabled ? beta_at(epoch, cfg.beta) : 0.0;
        if (result.beta_trace.size() < static_cast<std::size_t>(epoch)) result.beta_trace.push_back(beta);
        const FdBatchPlan plan = plan_fd_batch(y, cfg.mixup, rng);
        bool skipped = false;
        BatchGradient g = fd_batch_gradient(model, x, y, plan, beta, cfg, &skipped);
        if (skipped && beta > 0.0) ++result.npair_skipped_batches;
        return g;
      },
      [] {}, [] {}, result, "train_fd");
  if (result.npair_skipped_batches > 0) {
    std::clog << "warning: train_fd skipped the N-pair term on " << result.npair_skipped_batches
              << " single-class batches\n";
  }
  return result;
}

}  // namespace srctrace
