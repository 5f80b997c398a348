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

#include "srctrace/mlp.h"

#include <bit>
#include <cmath>
#include <cstring>

#include "srctrace/dataio.h"
#include "srctrace/error.h"

namespace srctrace {
namespace {

constexpr char kCheckpointMagic[4] = {'S', 'T', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr double kRelErrorFloor = 1e-6;

std::uint64_t mix_digest(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return h;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

}  // namespace

void MlpGrads::add(const MlpGrads& other, double scale) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    auto w = weights[l].values();
    const auto ow = other.weights[l].values();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += scale * ow[i];
    auto b = biases[l].values();
    const auto ob = other.biases[l].values();
    for (std::size_t i = 0; i < b.size(); ++i) b[i] += scale * ob[i];
  }
}

void MlpGrads::scale(double factor) {
  for (auto& w : weights) {
    for (double& v : w.values()) v *= factor;
  }
  for (auto& b : biases) {
    for (double& v : b.values()) v *= factor;
  }
}

bool MlpGrads::all_finite() const {
  for (const auto& w : weights) {
    if (!srctrace::all_finite(w)) return false;
  }
  for (const auto& b : biases) {
    if (!srctrace::all_finite(b)) return false;
  }
  return true;
}

MlpModel::MlpModel(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw ValidationError("MlpModel: need at least input and output sizes");
  for (std::size_t s : sizes_) {
    if (s == 0) throw ValidationError("MlpModel: layer sizes must be positive");
  }
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    weights_.emplace_back(sizes_[l], sizes_[l + 1]);
    biases_.emplace_back(1, sizes_[l + 1]);
  }
}

MlpModel MlpModel::random(std::vector<std::size_t> sizes, Rng& rng) {
  MlpModel model(std::move(sizes));
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    const double limit = std::sqrt(6.0 / static_cast<double>(model.sizes_[l]));
    for (double& w : model.weights_[l].values()) w = rng.uniform(-limit, limit);
  }
  return model;
}

std::size_t MlpModel::parameter_count() const {
  std::size_t count = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) count += sizes_[l] * sizes_[l + 1] + sizes_[l + 1];
  return count;
}

std::vector<Matrix*> MlpModel::parameters() {
  std::vector<Matrix*> out;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

std::vector<const Matrix*> MlpModel::parameters() const {
  std::vector<const Matrix*> out;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

std::vector<const Matrix*> MlpModel::tensors(const MlpGrads& grads) {
  std::vector<const Matrix*> out;
  for (std::size_t l = 0; l < grads.weights.size(); ++l) {
    out.push_back(&grads.weights[l]);
    out.push_back(&grads.biases[l]);
  }
  return out;
}

MlpGrads MlpModel::zero_grads() const {
  MlpGrads g;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    g.weights.emplace_back(weights_[l].rows(), weights_[l].cols());
    g.biases.emplace_back(1, biases_[l].cols());
  }
  return g;
}

ForwardCache MlpModel::forward(const Matrix& x) const {
  if (x.cols() != input_dim()) {
    throw ShapeError("MlpModel::forward: input has " + std::to_string(x.cols()) +
                     " columns, model expects " + std::to_string(input_dim()));
  }
  ForwardCache cache;
  cache.input = x;
  const Matrix* a = &cache.input;
  std::uint64_t digest = activation_digest_;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    Matrix z = matmul(*a, weights_[l]);
    for (std::size_t i = 0; i < z.rows(); ++i) {
      auto row = z.row(i);
      const auto b = biases_[l].row(0);
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += b[j];
    }
    cache.pre.push_back(std::move(z));
    if (l + 1 < num_layers()) {
      Matrix h = cache.pre.back();
      std::uint64_t bits = 0;
      std::size_t nbits = 0;
      for (double& v : h.values()) {
        const bool on = v > 0.0;
        if (!on) v = 0.0;
        bits = (bits << 1) | (on ? 1u : 0u);
        if (++nbits == 64) {
          digest = mix_digest(digest, bits);
          bits = 0;
          nbits = 0;
        }
      }
      digest = mix_digest(digest, bits ^ (nbits << 56));
      cache.post.push_back(std::move(h));
      a = &cache.post.back();
    }
  }
  activation_digest_ = digest;
  return cache;
}

MlpGrads MlpModel::backward(const ForwardCache& cache, const Matrix& grad_logits,
                            const Matrix* grad_embedding) const {
  if (cache.pre.size() != num_layers()) throw ValidationError("MlpModel::backward: missing forward state");
  if (grad_logits.rows() != cache.input.rows() || grad_logits.cols() != output_dim()) {
    throw ShapeError("MlpModel::backward: upstream gradient shape");
  }
  MlpGrads grads = zero_grads();
  Matrix g = grad_logits;
  for (std::size_t l = num_layers(); l-- > 0;) {
    const Matrix& a_prev = l == 0 ? cache.input : cache.post[l - 1];
    grads.weights[l] = matmul_tn(a_prev, g);
    auto db = grads.biases[l].row(0);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      const auto row = g.row(i);
      for (std::size_t j = 0; j < row.size(); ++j) db[j] += row[j];
    }
    if (l == 0) break;
    g = matmul_nt(g, weights_[l]);
    if (l == num_layers() - 1 && grad_embedding != nullptr) {
      if (grad_embedding->rows() != g.rows() || grad_embedding->cols() != g.cols()) {
        throw ShapeError("MlpModel::backward: embedding gradient shape");
      }
      auto gv = g.values();
      const auto ev = grad_embedding->values();
      for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += ev[i];
    }
    const auto pre = cache.pre[l - 1].values();
    auto gv = g.values();
    for (std::size_t i = 0; i < gv.size(); ++i) {
      if (!(pre[i] > 0.0)) gv[i] = 0.0;
    }
  }
  return grads;
}

MlpModel replace_head(const MlpModel& model, std::size_t k, Rng& rng, double scale) {
  std::vector<std::size_t> sizes = model.sizes();
  sizes.back() = k;
  MlpModel out(sizes);
  for (std::size_t l = 0; l + 1 < model.num_layers(); ++l) {
    out.weight(l) = model.weight(l);
    out.bias(l) = model.bias(l);
  }
  const std::size_t last = out.num_layers() - 1;
  for (double& w : out.weight(last).values()) w = rng.uniform(-scale, scale);
  for (double& b : out.bias(last).values()) b = rng.uniform(-scale, scale);
  return out;
}

std::vector<std::uint8_t> encode_checkpoint(const MlpModel& model) {
  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(model.sizes().size()));
  for (std::size_t s : model.sizes()) put_u32(out, static_cast<std::uint32_t>(s));
  for (const Matrix* t : model.parameters()) {
    for (double v : t->values()) put_f64(out, v);
  }
  return out;
}

MlpModel decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto need = [&](std::size_t n, const char* what) {
    if (bytes.size() - pos < n) throw FormatError(pos, std::string("truncated ") + what);
  };
  auto get_u32 = [&](const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  };
  need(4, "magic");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) throw FormatError(0, "bad magic, expected \"STCK\"");
  pos = 4;
  if (get_u32("version") != kCheckpointVersion) throw FormatError(4, "unsupported version");
  const std::size_t count_at = pos;
  const std::uint32_t count = get_u32("size list");
  if (count < 2 || count > 64) throw FormatError(count_at, "implausible layer count");
  std::vector<std::size_t> sizes;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = pos;
    const std::uint32_t s = get_u32("size list");
    if (s == 0) throw FormatError(at, "zero layer size");
    sizes.push_back(s);
  }
  MlpModel model(sizes);
  for (Matrix* t : model.parameters()) {
    need(t->size() * 8, "parameter payload");
    for (double& v : t->values()) {
      std::uint64_t bits = 0;
      for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
      v = std::bit_cast<double>(bits);
      if (!std::isfinite(v)) throw FormatError(pos, "non-finite parameter");
      pos += 8;
    }
  }
  if (pos != bytes.size()) throw FormatError(pos, "trailing bytes after parameters");
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const MlpModel& model) {
  write_file_bytes(path, encode_checkpoint(model));
}

MlpModel load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(e.offset(), path.string() + ": " + e.detail());
  }
}

MlpModel load_checkpoint(const std::filesystem::path& path,
                         const std::vector<std::size_t>& expected_sizes) {
  MlpModel model = load_checkpoint(path);
  if (model.sizes() != expected_sizes) {
    auto fmt = [](const std::vector<std::size_t>& v) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
      return s;
    };
    throw CheckpointError("checkpoint " + path.string() + " has layer sizes [" + fmt(model.sizes()) +
                          "], expected [" + fmt(expected_sizes) + "]");
  }
  return model;
}

GradCheckReport grad_check(const MlpModel& model, const LossFn& loss, double tolerance,
                           double step) {
  MlpModel probe = model;
  MlpGrads analytic = probe.zero_grads();
  probe.reset_activation_digest();
  loss(probe, &analytic);
  const std::uint64_t base_digest = probe.activation_digest();
  const auto grad_tensors = MlpModel::tensors(analytic);

  GradCheckReport report;
  auto params = probe.parameters();
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto values = params[t]->values();
    const auto grad = grad_tensors[t]->values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      probe.reset_activation_digest();
      const double up = loss(probe, nullptr);
      const std::uint64_t up_digest = probe.activation_digest();
      values[i] = saved - step;
      probe.reset_activation_digest();
      const double down = loss(probe, nullptr);
      const std::uint64_t down_digest = probe.activation_digest();
      values[i] = saved;
      if (up_digest != base_digest || down_digest != base_digest) {
        ++report.skipped_kinks;
        continue;
      }
      const double numeric = (up - down) / (2.0 * step);
      const double denom = std::max({std::abs(grad[i]), std::abs(numeric), kRelErrorFloor});
      const double rel = std::abs(grad[i] - numeric) / denom;
      ++report.checked;
      if (!(rel <= report.max_rel_error)) {
        report.max_rel_error = rel;
        report.worst_tensor = t;
        report.worst_index = i;
      }
    }
  }
  report.passed = report.checked > 0 && report.max_rel_error < tolerance;
  return report;
}

}  // namespace srctrace
