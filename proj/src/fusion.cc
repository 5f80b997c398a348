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

#include "srctrace/fusion.h"

#include <algorithm>
#include <cmath>

#include "srctrace/error.h"
#include "srctrace/metrics.h"

namespace srctrace {
namespace {

// Position of every id of `a` within `b`; the id sets must be identical.
std::vector<std::size_t> match_ids(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.size() != b.size()) {
    throw DataError("fusion: members hold different numbers of samples (" + std::to_string(a.size()) +
                    " vs " + std::to_string(b.size()) + ")");
  }
  const auto index_b = index_ids(b);
  if (index_ids(a).size() != a.size() || index_b.size() != b.size()) {
    throw DataError("fusion: duplicate sample ids");
  }
  std::vector<std::size_t> pos;
  pos.reserve(a.size());
  for (const auto& id : a) {
    const auto it = index_b.find(id);
    if (it == index_b.end()) throw DataError("fusion: id \"" + id + "\" is missing from the second member");
    pos.push_back(it->second);
  }
  return pos;
}

// Smallest probability kept when writing log-probabilities as logits.
constexpr double kLogFloor = 1e-300;

Matrix fuse_probs(const Matrix& pa, const Matrix& pb, const std::vector<std::size_t>& pos, FusionMode mode) {
  Matrix out(pa.rows(), pa.cols());
  for (std::size_t i = 0; i < pa.rows(); ++i) {
    const auto a = pa.row(i);
    const auto b = pb.row(pos[i]);
    auto o = out.row(i);
    if (mode == FusionMode::kProbabilities) {
      for (std::size_t c = 0; c < a.size(); ++c) o[c] = (a[c] + b[c]) / 2.0;
    } else {
      std::vector<double> mean(a.size());
      for (std::size_t c = 0; c < a.size(); ++c) {
        mean[c] = (std::log(std::max(a[c], kLogFloor)) + std::log(std::max(b[c], kLogFloor))) / 2.0;
      }
      const auto p = softmax(mean);
      std::copy(p.begin(), p.end(), o.begin());
    }
  }
  return out;
}

}  // namespace

EmbeddingSet concat_embeddings(const EmbeddingSet& a, const EmbeddingSet& b) {
  const auto pos = match_ids(a.ids, b.ids);
  EmbeddingSet out;
  out.ids = a.ids;
  out.data = Matrix(a.size(), a.dim() + b.dim());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto ra = a.data.row(i);
    const auto rb = b.data.row(pos[i]);
    auto o = out.data.row(i);
    std::copy(ra.begin(), ra.end(), o.begin());
    std::copy(rb.begin(), rb.end(), o.begin() + static_cast<std::ptrdiff_t>(ra.size()));
  }
  return out;
}

Matrix average_probs(const LogitSet& a, const LogitSet& b, FusionMode mode) {
  if (a.labels != b.labels) throw ValidationError("fusion: member label vocabularies differ");
  const auto pos = match_ids(a.ids, b.ids);
  if (mode == FusionMode::kLogits) {
    Matrix out(a.size(), a.data.cols());
    for (std::size_t i = 0; i < a.size(); ++i) {
      std::vector<double> mean(a.data.cols());
      for (std::size_t c = 0; c < mean.size(); ++c) mean[c] = (a.data(i, c) + b.data(pos[i], c)) / 2.0;
      const auto p = softmax(mean);
      std::copy(p.begin(), p.end(), out.row(i).begin());
    }
    return out;
  }
  return fuse_probs(softmax_rows(a.data), softmax_rows(b.data), pos, mode);
}

ScoredSystem fuse_systems(const ScoredSystem& a, const ScoredSystem& b, FusionMode mode) {
  if (a.labels() != b.labels()) throw ValidationError("fusion: member label vocabularies differ");
  const auto pos = match_ids(a.embeddings.ids, b.embeddings.ids);
  ScoredSystem out;
  out.embeddings = concat_embeddings(a.embeddings, b.embeddings);
  out.probs = fuse_probs(a.probs, b.probs, pos, mode);
  out.logits.ids = out.embeddings.ids;
  out.logits.labels = a.labels();
  out.logits.data = Matrix(out.probs.rows(), out.probs.cols());
  for (std::size_t i = 0; i < out.probs.values().size(); ++i) {
    out.logits.data.values()[i] = std::log(std::max(out.probs.values()[i], kLogFloor));
  }
  return out;
}

EvalResult fuse_and_evaluate(const ScoredSystem& a, const ScoredSystem& b, const Manifest& manifest,
                             const EvalOptions& opts, FusionMode mode) {
  return evaluate_system(fuse_systems(a, b, mode), manifest, opts);
}

}  // namespace srctrace
