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

#ifndef SRCTRACE_EVALUATION_H_
#define SRCTRACE_EVALUATION_H_

#include <filesystem>
#include <optional>
#include <vector>

#include "srctrace/dataio.h"
#include "srctrace/metrics.h"
#include "srctrace/ood.h"

namespace srctrace {

// Embeddings and classifier outputs of one system, rows aligned by id.
// probs is softmax(logits) for exported systems; fused systems carry the
// averaged probabilities directly and log-probabilities as logits.
struct ScoredSystem {
  EmbeddingSet embeddings;
  LogitSet logits;
  Matrix probs;

  std::size_t size() const { return embeddings.size(); }
  const std::vector<std::string>& labels() const { return logits.labels; }
};

// Joins the two sets by id; both must hold exactly the same ids.
ScoredSystem make_system(const EmbeddingSet& embeddings, const LogitSet& logits);

// Rows for the given ids, in that order.
ScoredSystem select_rows(const ScoredSystem& system, const std::vector<std::string>& ids);

// A system directory holds train/dev/eval .steb and .stlg files.
inline constexpr const char* kSplitNames[3] = {"train", "dev", "eval"};
ScoredSystem load_system_dir(const std::filesystem::path& dir);
// Writes one file pair per split with the rows the manifest assigns to it.
void write_system_dir(const std::filesystem::path& dir, const ScoredSystem& system,
                      const Manifest& manifest);

// Ids of one split in manifest order, optionally filtered by the OOD flag.
std::vector<std::string> split_ids(const Manifest& manifest, Split split,
                                   std::optional<bool> is_ood = std::nullopt);

struct EvalOptions {
  NsdConfig nsd;
  EceConfig ece;
  bool require_ood = false;
  // When set, the Frechet term compares in-domain eval embeddings with these.
  std::optional<EmbeddingSet> frechet_against;
  std::size_t threads = 1;
};

struct FittedDetector {
  NsdModel model;
  ThresholdFit fit;
};

// References are the train embeddings; the threshold is fitted on scaled dev
// scores (or taken from nsd.tau_override).
FittedDetector fit_detector(const ScoredSystem& system, const Manifest& manifest,
                            const NsdConfig& nsd, std::size_t threads = 1);

struct EvalResult {
  MetricReport in_domain;
  std::optional<MetricReport> ood;
  std::optional<FittedDetector> detector;
  std::vector<OodDecision> decisions;  // eval rows, when ood is set
};

// In-domain report over non-OOD eval rows. When eval carries OOD rows an
// open-set report is added: every eval row, K+1 classes with detector-flagged
// rows predicted as "unknown", and the detection EER of known vs OOD scores.
EvalResult evaluate_system(const ScoredSystem& system, const Manifest& manifest,
                           const EvalOptions& opts);

// Probabilities of K+1 classes: known probabilities scaled by (1 - u) and the
// unknown class u, where u = 1 for a flagged row and 0 otherwise.
Matrix open_set_probs(const Matrix& probs, const std::vector<OodDecision>& decisions);

}  // namespace srctrace

#endif  // SRCTRACE_EVALUATION_H_
