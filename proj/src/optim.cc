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

#include "srctrace/optim.h"

#include <cmath>

#include "srctrace/error.h"

namespace srctrace {

void adam_step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads,
               AdamState& state, const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: parameter/gradient count");
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t]->rows() != grads[t]->rows() || params[t]->cols() != grads[t]->cols()) {
      throw ShapeError("adam_step: tensor " + std::to_string(t) + " shape mismatch");
    }
    if (!all_finite(*grads[t])) {
      throw NumericalError("adam_step: non-finite gradient in tensor " + std::to_string(t));
    }
  }
  if (state.m.empty()) {
    for (const Matrix* p : params) {
      state.m.emplace_back(p->rows(), p->cols());
      state.v.emplace_back(p->rows(), p->cols());
    }
  } else if (state.m.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state does not match parameters");
  }

  ++state.step;
  const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto p = params[t]->values();
    const auto g = grads[t]->values();
    auto m = state.m[t].values();
    auto v = state.v[t].values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      p[i] -= cfg.lr * cfg.weight_decay * p[i];
      p[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

double lr_at(int epoch, double base_lr, double decay, const std::vector<int>& milestones) {
  double lr = base_lr;
  for (int m : milestones) {
    if (epoch >= m) lr *= decay;
  }
  return lr;
}

}  // namespace srctrace
