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

#ifndef SRCTRACE_MLP_H_
#define SRCTRACE_MLP_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "srctrace/linalg.h"
#include "srctrace/rng.h"

namespace srctrace {

// Per-tensor gradients, shaped like the model parameters.
struct MlpGrads {
  std::vector<Matrix> weights;
  std::vector<Matrix> biases;

  void add(const MlpGrads& other, double scale = 1.0);
  void scale(double factor);
  bool all_finite() const;
};

// Activations recorded by forward() for use by backward().
struct ForwardCache {
  Matrix input;
  std::vector<Matrix> pre;   // pre-activation of every layer
  std::vector<Matrix> post;  // ReLU output of every hidden layer

  const Matrix& logits() const { return pre.back(); }
  // Output of the last hidden layer, or the input for a single-layer model.
  const Matrix& embedding() const { return post.empty() ? input : post.back(); }
};

// Dense feedforward classifier: ReLU on every layer but the last. The last
// hidden layer's output is the embedding.
//
// sizes = {D_in, H_1, ..., D_emb, K}. Weights are stored in x out layout so a
// layer computes Y = X W + b.
class MlpModel {
 public:
  MlpModel() = default;
  // Zero-initialized parameters.
  explicit MlpModel(std::vector<std::size_t> sizes);
  // He-uniform weights, zero biases.
  static MlpModel random(std::vector<std::size_t> sizes, Rng& rng);

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::size_t num_layers() const { return weights_.size(); }
  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t output_dim() const { return sizes_.back(); }
  std::size_t embedding_dim() const { return sizes_[sizes_.size() - 2]; }
  std::size_t parameter_count() const;

  Matrix& weight(std::size_t layer) { return weights_[layer]; }
  const Matrix& weight(std::size_t layer) const { return weights_[layer]; }
  Matrix& bias(std::size_t layer) { return biases_[layer]; }
  const Matrix& bias(std::size_t layer) const { return biases_[layer]; }

  // Parameter tensors in a fixed order: W0, b0, W1, b1, ...
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
  static std::vector<const Matrix*> tensors(const MlpGrads& grads);
  MlpGrads zero_grads() const;

  ForwardCache forward(const Matrix& x) const;
  // grad_embedding (optional) is added to the gradient flowing into the
  // embedding layer output.
  MlpGrads backward(const ForwardCache& cache, const Matrix& grad_logits,
                    const Matrix* grad_embedding = nullptr) const;

  // Digest of the ReLU on/off pattern of every forward() call since the last
  // reset. Lets gradient checks detect finite differences across a kink.
  std::uint64_t activation_digest() const { return activation_digest_; }
  void reset_activation_digest() const { activation_digest_ = 0; }

  bool operator==(const MlpModel& other) const {
    return sizes_ == other.sizes_ && weights_ == other.weights_ && biases_ == other.biases_;
  }

 private:
  std::vector<std::size_t> sizes_;
  std::vector<Matrix> weights_;
  std::vector<Matrix> biases_;
  mutable std::uint64_t activation_digest_ = 0;
};

// Replaces the output layer with a fresh `k`-way head drawn from
// U(-scale, scale). All other layers are kept.
MlpModel replace_head(const MlpModel& model, std::size_t k, Rng& rng, double scale = 0.05);

// Checkpoint container: "STCK", u32 version, u32 layer-size count, u32 sizes,
// then every parameter tensor (W0, b0, W1, ...) as little-endian f64.
std::vector<std::uint8_t> encode_checkpoint(const MlpModel& model);
MlpModel decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const std::filesystem::path& path, const MlpModel& model);
MlpModel load_checkpoint(const std::filesystem::path& path);
// Throws CheckpointError unless the stored sizes equal `expected_sizes`.
MlpModel load_checkpoint(const std::filesystem::path& path,
                         const std::vector<std::size_t>& expected_sizes);

// Loss closure: returns the loss and, when grads is non-null, fills it with
// the analytic parameter gradient.
using LossFn = std::function<double(const MlpModel&, MlpGrads*)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
  bool passed = false;
};

// Compares analytic gradients with central differences on every parameter.
// Relative error is |a - n| / max(|a|, |n|, 1e-6); parameters whose
// perturbation flips a ReLU are skipped and counted.
GradCheckReport grad_check(const MlpModel& model, const LossFn& loss, double tolerance,
                           double step = 1e-5);

}  // namespace srctrace

#endif  // SRCTRACE_MLP_H_
