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

#ifndef SRCTRACE_OOD_H_
#define SRCTRACE_OOD_H_

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "srctrace/dataio.h"
#include "srctrace/linalg.h"

namespace srctrace {

// How the raw similarity is combined with classifier confidence.
enum class ScalingMode {
  kMaxSoftmax,  // raw * max_k p_k
  kNone,        // raw
};

const char* scaling_name(ScalingMode mode);
std::optional<ScalingMode> parse_scaling(std::string_view name);

struct NsdConfig {
  std::size_t k = 1;  // top-k cosine similarities are averaged
  ScalingMode scaling = ScalingMode::kMaxSoftmax;
  // Quantile of known dev scores used when the dev split has no OOD flags.
  double fallback_quantile = 0.05;
  std::optional<double> tau_override;

  bool operator==(const NsdConfig&) const = default;
};

// Novel-similarity detector fitted on training embeddings.
class NsdModel {
 public:
  NsdModel() = default;
  // class_of_row names the known class of every reference row. A unit-norm
  // copy of the references is kept for scoring.
  NsdModel(const Matrix& references, std::vector<std::size_t> class_of_row,
           std::vector<std::string> class_names, NsdConfig cfg);

  const NsdConfig& config() const { return cfg_; }
  NsdConfig& config() { return cfg_; }
  std::size_t dim() const { return unit_refs_.cols(); }
  std::size_t num_references() const { return unit_refs_.rows(); }
  const Matrix& references() const { return refs_; }
  const Matrix& unit_references() const { return unit_refs_; }
  const std::vector<std::size_t>& class_of_row() const { return class_of_row_; }
  const std::vector<std::string>& class_names() const { return class_names_; }
  // Reference rows of one class.
  const std::vector<std::size_t>& rows_of_class(std::size_t c) const { return class_rows_.at(c); }

  double tau() const { return tau_; }
  void set_tau(double tau);
  bool has_tau() const { return has_tau_; }

  bool operator==(const NsdModel&) const = default;

 private:
  NsdConfig cfg_;
  Matrix refs_;
  Matrix unit_refs_;
  std::vector<std::size_t> class_of_row_;
  std::vector<std::string> class_names_;
  std::vector<std::vector<std::size_t>> class_rows_;
  double tau_ = 0.0;
  bool has_tau_ = false;
};

// Mean of the top-k cosine similarities to the reference rows.
double nsd_similarity(std::span<const double> embedding, const NsdModel& model);

double confidence_scale(double raw, std::span<const double> probs, ScalingMode mode);
double confidence_scale_logits(double raw, std::span<const double> logits, ScalingMode mode);

struct ThresholdFit {
  double tau = 0.0;
  std::optional<double> dev_eer;  // set when OOD flags were usable
};

// With both known and OOD dev scores, tau sits at the EER operating point
// (known samples are the accepted class). Otherwise tau is the configured
// low quantile of the dev scores.
ThresholdFit fit_threshold(std::span<const double> dev_scores,
                           const std::optional<std::vector<bool>>& dev_is_ood,
                           double fallback_quantile = 0.05);

// Linear-interpolation quantile of the values, q in [0,1].
double quantile(std::vector<double> values, double q);

inline constexpr const char* kUnknownLabel = "unknown";

struct OodDecision {
  std::string id;
  double raw = 0.0;
  double score = 0.0;
  bool is_novel = false;
  std::string predicted;  // known label or "unknown"
  std::size_t predicted_index = 0;  // index into the label vocabulary, or its size when novel
};

// Scores rows of `embeddings` against the fitted detector. `probs` holds class
// probabilities aligned row-for-row with the embeddings. Threads > 1 splits
// rows across workers; results do not depend on the thread count.
std::vector<OodDecision> classify(const EmbeddingSet& embeddings, const Matrix& probs,
                                  const std::vector<std::string>& labels, const NsdModel& model,
                                  std::size_t threads = 1);
// Convenience overload on raw logits; ids must match in order.
std::vector<OodDecision> classify(const EmbeddingSet& embeddings, const LogitSet& logits,
                                  const NsdModel& model, std::size_t threads = 1);

// "STND" container: magic, u32 version, u32 k, u32 scaling, u32 has_tau,
// f64 tau, f64 fallback quantile, u32 N, u32 D, N*D f64 references, u32 class
// per row, then the class-name block (u32 count, u16-prefixed strings).
std::vector<std::uint8_t> encode_nsd(const NsdModel& model);
NsdModel decode_nsd(const std::vector<std::uint8_t>& bytes);
void save_nsd(const std::filesystem::path& path, const NsdModel& model);
NsdModel load_nsd(const std::filesystem::path& path);

}  // namespace srctrace

#endif  // SRCTRACE_OOD_H_
