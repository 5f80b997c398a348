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

#include "srctrace/losses.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "srctrace/error.h"
#include "srctrace/metrics.h"

namespace srctrace {
namespace {

constexpr double kTargetSumTolerance = 1e-9;

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

std::vector<double> unit(std::span<const double> v, const char* what) {
  const double n = norm2(v);
  if (!(n > 0.0)) throw DegenerateInputError(std::string(what) + ": zero-norm vector");
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

// Chain rule through v -> v / |v|.
std::vector<double> unnormalize_grad(std::span<const double> v, const std::vector<double>& g_unit) {
  const double n = norm2(v);
  std::vector<double> u(v.begin(), v.end());
  for (double& x : u) x /= n;
  const double proj = dot(g_unit, u);
  std::vector<double> g(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) g[i] = (g_unit[i] - proj * u[i]) / n;
  return g;
}

void add_scaled(std::span<double> dst, std::span<const double> src, double scale) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

}  // namespace

std::vector<double> one_hot(std::size_t index, std::size_t k) {
  if (index >= k) throw ValidationError("one_hot: index out of range");
  std::vector<double> v(k, 0.0);
  v[index] = 1.0;
  return v;
}

LossAndGrad cross_entropy(std::span<const double> logits, std::span<const double> soft_target) {
  if (logits.size() != soft_target.size()) throw ShapeError("cross_entropy: target length");
  if (logits.empty()) throw DegenerateInputError("cross_entropy: no classes");
  double target_sum = 0.0;
  for (double t : soft_target) {
    if (t < 0.0) throw ValidationError("cross_entropy: negative target mass");
    target_sum += t;
  }
  if (std::abs(target_sum - 1.0) > kTargetSumTolerance) {
    throw ValidationError("cross_entropy: soft target sums to " + std::to_string(target_sum));
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - m);
  const double log_z = m + std::log(sum);
  LossAndGrad out;
  out.grad.resize(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) {
    if (soft_target[k] != 0.0) out.loss -= soft_target[k] * (logits[k] - log_z);
    out.grad[k] = std::exp(logits[k] - log_z) - soft_target[k];
  }
  return out;
}

LossAndGrad cross_entropy(std::span<const double> logits, std::size_t target) {
  return cross_entropy(logits, one_hot(target, logits.size()));
}

MixedPair mixup_pair(std::span<const double> x_i, std::span<const double> y_i,
                     std::span<const double> x_j, std::span<const double> y_j, double lambda) {
  if (x_i.size() != x_j.size() || y_i.size() != y_j.size()) {
    throw ShapeError("mixup_pair: dimension mismatch");
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("mixup_pair: lambda outside [0,1]");
  MixedPair out;
  out.x.resize(x_i.size());
  out.y.resize(y_i.size());
  for (std::size_t d = 0; d < x_i.size(); ++d) out.x[d] = lambda * x_i[d] + (1.0 - lambda) * x_j[d];
  for (std::size_t k = 0; k < y_i.size(); ++k) out.y[k] = lambda * y_i[k] + (1.0 - lambda) * y_j[k];
  return out;
}

RegMixupResult regmixup_loss(std::span<const double> clean_logits, std::span<const double> y,
                             std::span<const double> mixed_logits,
                             std::span<const double> y_mixed, const MixupConfig& cfg) {
  if (cfg.eta < 0.0) throw ValidationError("regmixup_loss: eta must be non-negative");
  auto clean = cross_entropy(clean_logits, y);
  auto mixed = cross_entropy(mixed_logits, y_mixed);
  RegMixupResult out;
  out.loss = clean.loss + cfg.eta * mixed.loss;
  out.grad_clean = std::move(clean.grad);
  out.grad_mixed = std::move(mixed.grad);
  for (double& g : out.grad_mixed) g *= cfg.eta;
  return out;
}

NpairResult npair_loss(std::span<const double> anchor, std::span<const double> positive,
                       const std::vector<std::span<const double>>& negatives,
                       const NpairConfig& cfg) {
  if (negatives.empty()) throw DegenerateInputError("npair_loss: empty negative set");
  if (cfg.beta < 0.0) throw ValidationError("npair_loss: beta must be non-negative");
  const std::size_t d = anchor.size();
  if (positive.size() != d) throw ShapeError("npair_loss: positive dimension");
  for (const auto& neg : negatives) {
    if (neg.size() != d) throw ShapeError("npair_loss: negative dimension");
  }

  std::vector<double> a(anchor.begin(), anchor.end());
  std::vector<double> p(positive.begin(), positive.end());
  std::vector<std::vector<double>> negs;
  negs.reserve(negatives.size());
  if (cfg.normalize) {
    a = unit(anchor, "npair_loss");
    p = unit(positive, "npair_loss");
    for (const auto& neg : negatives) negs.push_back(unit(neg, "npair_loss"));
  } else {
    for (const auto& neg : negatives) negs.emplace_back(neg.begin(), neg.end());
  }

  const double ap = dot(a, p);
  std::vector<double> diff(negs.size());
  double shift = 0.0;  // the implicit 1 in the sum is exp(0)
  for (std::size_t i = 0; i < negs.size(); ++i) {
    diff[i] = dot(a, negs[i]) - ap;
    shift = std::max(shift, diff[i]);
  }
  double sum = std::exp(-shift);
  std::vector<double> weight(negs.size());
  for (std::size_t i = 0; i < negs.size(); ++i) {
    weight[i] = std::exp(diff[i] - shift);
    sum += weight[i];
  }
  for (double& w : weight) w /= sum;

  NpairResult out;
  out.loss = cfg.beta * (shift + std::log(sum));
  out.grad_anchor.assign(d, 0.0);
  out.grad_positive.assign(d, 0.0);
  out.grad_negatives.assign(negs.size(), std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < negs.size(); ++i) {
    const double w = cfg.beta * weight[i];
    for (std::size_t j = 0; j < d; ++j) {
      out.grad_anchor[j] += w * (negs[i][j] - p[j]);
      out.grad_positive[j] -= w * a[j];
      out.grad_negatives[i][j] = w * a[j];
    }
  }
  if (cfg.normalize) {
    out.grad_anchor = unnormalize_grad(anchor, out.grad_anchor);
    out.grad_positive = unnormalize_grad(positive, out.grad_positive);
    for (std::size_t i = 0; i < negs.size(); ++i) {
      out.grad_negatives[i] = unnormalize_grad(negatives[i], out.grad_negatives[i]);
    }
  }
  return out;
}

FdBatchPlan plan_fd_batch(std::span<const std::size_t> labels, const MixupConfig& cfg, Rng& rng) {
  if (!(cfg.alpha > 0.0)) throw ValidationError("plan_fd_batch: alpha must be positive");
  const std::size_t n = labels.size();
  FdBatchPlan plan;
  plan.partner.resize(n);
  plan.lambda.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    plan.partner[i] = rng.uniform_index(n);
    plan.lambda[i] = rng.beta(cfg.alpha, cfg.alpha);
  }

  std::map<std::size_t, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < n; ++i) members[labels[i]].push_back(i);
  plan.classes_present = members.size();
  if (plan.classes_present < 2) return plan;

  for (std::size_t i = 0; i < n; ++i) {
    const auto& same = members[labels[i]];
    if (same.size() < 2) continue;
    FdBatchPlan::Anchor anchor;
    anchor.anchor = i;
    std::size_t pick = rng.uniform_index(same.size() - 1);
    if (same[pick] == i) pick = same.size() - 1;  // skip the anchor itself
    anchor.positive = same[pick];
    for (const auto& [label, rows] : members) {
      if (label == labels[i]) continue;
      anchor.negatives.push_back(rows[rng.uniform_index(rows.size())]);
    }
    plan.anchors.push_back(std::move(anchor));
  }
  return plan;
}

Matrix mix_rows(const Matrix& x, const FdBatchPlan& plan) {
  if (plan.partner.size() != x.rows()) throw ShapeError("mix_rows: plan does not match batch");
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double lambda = plan.lambda[i];
    const auto xi = x.row(i);
    const auto xj = x.row(plan.partner[i]);
    auto dst = out.row(i);
    for (std::size_t d = 0; d < x.cols(); ++d) dst[d] = lambda * xi[d] + (1.0 - lambda) * xj[d];
  }
  return out;
}

Matrix mix_targets(std::span<const std::size_t> labels, std::size_t k, const FdBatchPlan& plan) {
  if (plan.partner.size() != labels.size()) throw ShapeError("mix_targets: plan does not match batch");
  Matrix out(labels.size(), k);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto mixed = mixup_pair({}, one_hot(labels[i], k), {}, one_hot(labels[plan.partner[i]], k),
                                  plan.lambda[i]);
    std::copy(mixed.y.begin(), mixed.y.end(), out.row(i).begin());
  }
  return out;
}

FdLossResult fd_loss(const FdLossInputs& in) {
  const std::size_t n = in.labels.size();
  if (n == 0) throw DegenerateInputError("fd_loss: empty batch");
  if (in.logits.rows() != n || in.mixed_logits.rows() != n || in.embeddings.rows() != n) {
    throw ShapeError("fd_loss: batch rows disagree");
  }
  if (in.beta < 0.0) throw ValidationError("fd_loss: beta must be non-negative");
  const std::size_t k = in.logits.cols();
  const Matrix targets_mixed = mix_targets(in.labels, k, in.plan);

  FdLossResult out;
  out.grad_logits = Matrix(n, k);
  out.grad_mixed_logits = Matrix(n, k);
  out.grad_embeddings = Matrix(in.embeddings.rows(), in.embeddings.cols());
  const double inv_n = 1.0 / static_cast<double>(n);
  double regmix_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = regmixup_loss(in.logits.row(i), one_hot(in.labels[i], k), in.mixed_logits.row(i),
                                 targets_mixed.row(i), in.mixup);
    regmix_sum += r.loss;
    add_scaled(out.grad_logits.row(i), r.grad_clean, inv_n);
    add_scaled(out.grad_mixed_logits.row(i), r.grad_mixed, inv_n);
  }
  out.regmixup = regmix_sum * inv_n;

  if (in.plan.anchors.empty()) {
    out.npair_skipped = true;
  } else if (in.beta > 0.0) {
    const NpairConfig cfg{in.beta, in.normalize_npair};
    const double inv_a = 1.0 / static_cast<double>(in.plan.anchors.size());
    double npair_sum = 0.0;
    for (const auto& anchor : in.plan.anchors) {
      std::vector<std::span<const double>> negatives;
      for (std::size_t idx : anchor.negatives) negatives.push_back(in.embeddings.row(idx));
      const auto r = npair_loss(in.embeddings.row(anchor.anchor), in.embeddings.row(anchor.positive),
                                negatives, cfg);
      npair_sum += r.loss;
      add_scaled(out.grad_embeddings.row(anchor.anchor), r.grad_anchor, inv_a);
      add_scaled(out.grad_embeddings.row(anchor.positive), r.grad_positive, inv_a);
      for (std::size_t j = 0; j < anchor.negatives.size(); ++j) {
        add_scaled(out.grad_embeddings.row(anchor.negatives[j]), r.grad_negatives[j], inv_a);
      }
    }
    out.npair = npair_sum * inv_a;
  }
  out.loss = out.regmixup + out.npair;
  return out;
}

OcSoftmaxResult oc_softmax_loss(std::span<const double> embedding, bool is_real,
                                const OcSoftmaxParams& params) {
  if (embedding.size() != params.direction.size()) throw ShapeError("oc_softmax_loss: dimension");
  if (!(params.m_real > params.m_fake)) throw ValidationError("oc_softmax_loss: need m_real > m_fake");
  const double r = norm2(embedding);
  if (!(r > 0.0)) throw DegenerateInputError("oc_softmax_loss: zero-norm embedding");
  const std::size_t d = embedding.size();
  std::vector<double> x_unit(embedding.begin(), embedding.end());
  for (double& v : x_unit) v /= r;
  const double s = dot(params.direction, x_unit);

  const double z = is_real ? params.alpha * (params.m_real - s) : params.alpha * (s - params.m_fake);
  OcSoftmaxResult out;
  out.loss = softplus(z);
  const double dl_ds = (is_real ? -params.alpha : params.alpha) * sigmoid(z);
  out.grad_direction.resize(d);
  out.grad_embedding.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    out.grad_direction[j] = dl_ds * x_unit[j];
    out.grad_embedding[j] = dl_ds * (params.direction[j] - s * x_unit[j]) / r;
  }
  return out;
}

void normalize_direction(OcSoftmaxParams& params) {
  params.direction = unit(params.direction, "normalize_direction");
}

double beta_at(int epoch, const BetaSchedule& sched) {
  if (epoch <= sched.warmup_epochs) return 0.0;
  if (epoch >= sched.final_epoch) return sched.final_value;
  const int first = sched.warmup_epochs + 1;
  const double t = static_cast<double>(epoch - first) / static_cast<double>(sched.final_epoch - first);
  return sched.init + t * (sched.final_value - sched.init);
}

}  // namespace srctrace
