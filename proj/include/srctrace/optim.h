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

#ifndef SRCTRACE_OPTIM_H_
#define SRCTRACE_OPTIM_H_

#include <vector>

#include "srctrace/linalg.h"

namespace srctrace {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-4;  // decoupled
};

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long step = 0;
};

// One Adam step with decoupled weight decay:
//   p <- p - lr * wd * p - lr * m_hat / (sqrt(v_hat) + eps)
// State is lazily sized on the first call. Throws NumericalError on a
// non-finite gradient, leaving params and state untouched.
void adam_step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads,
               AdamState& state, const AdamConfig& cfg);

// Learning rate after applying `decay` once for every milestone epoch that
// has been reached (1-based epochs).
double lr_at(int epoch, double base_lr, double decay, const std::vector<int>& milestones);

}  // namespace srctrace

#endif  // SRCTRACE_OPTIM_H_
