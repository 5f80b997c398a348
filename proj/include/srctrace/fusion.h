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

#ifndef SRCTRACE_FUSION_H_
#define SRCTRACE_FUSION_H_

#include "srctrace/dataio.h"
#include "srctrace/evaluation.h"

namespace srctrace {

enum class FusionMode {
  kProbabilities,  // mean of the two softmax outputs
  kLogits,         // softmax of the mean logits (ablation)
};

// Per-id concatenation [a | b]; rows follow a's order. Id sets must match.
EmbeddingSet concat_embeddings(const EmbeddingSet& a, const EmbeddingSet& b);

// Fused class probabilities, rows in a's order. Vocabularies must match,
// including order.
Matrix average_probs(const LogitSet& a, const LogitSet& b, FusionMode mode = FusionMode::kProbabilities);

// Concatenated embeddings and averaged probabilities. The fused logits are the
// log of the fused probabilities, so softmax recovers them.
ScoredSystem fuse_systems(const ScoredSystem& a, const ScoredSystem& b,
                          FusionMode mode = FusionMode::kProbabilities);

// Evaluates the fused pair; the detector is refitted on fused embeddings.
EvalResult fuse_and_evaluate(const ScoredSystem& a, const ScoredSystem& b, const Manifest& manifest,
                             const EvalOptions& opts, FusionMode mode = FusionMode::kProbabilities);

}  // namespace srctrace

#endif  // SRCTRACE_FUSION_H_
