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

#include "srctrace/ood.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <functional>
#include <thread>

#include "srctrace/error.h"
#include "srctrace/metrics.h"

namespace srctrace {
namespace {

constexpr char kNsdMagic[4] = {'S', 'T', 'N', 'D'};
constexpr std::uint32_t kNsdVersion = 1;

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  void str(const std::string& s) {
    out.push_back(static_cast<std::uint8_t>(s.size()));
    out.push_back(static_cast<std::uint8_t>(s.size() >> 8));
    out.insert(out.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}
  std::size_t pos = 0;
  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos < n) throw FormatError(pos, std::string("truncated ") + what);
  }
  std::uint64_t raw(int bytes, const char* what) {
    need(static_cast<std::size_t>(bytes), what);
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(in_[pos + i]) << (8 * i);
    pos += static_cast<std::size_t>(bytes);
    return v;
  }
  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(raw(4, what)); }
  double f64(const char* what) {
    const std::size_t at = pos;
    const double v = std::bit_cast<double>(raw(8, what));
    if (!std::isfinite(v)) throw FormatError(at, std::string("non-finite ") + what);
    return v;
  }
  std::string str(const char* what) {
    const auto len = static_cast<std::size_t>(raw(2, what));
    need(len, what);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos), len);
    pos += len;
    return s;
  }
  bool at_end() const { return pos == in_.size(); }

 private:
  const std::vector<std::uint8_t>& in_;
};

}  // namespace

const char* scaling_name(ScalingMode mode) {
  return mode == ScalingMode::kMaxSoftmax ? "max-softmax" : "none";
}

std::optional<ScalingMode> parse_scaling(std::string_view name) {
  if (name == "max-softmax") return ScalingMode::kMaxSoftmax;
  if (name == "none") return ScalingMode::kNone;
  return std::nullopt;
}

NsdModel::NsdModel(const Matrix& references, std::vector<std::size_t> class_of_row,
                   std::vector<std::string> class_names, NsdConfig cfg)
    : cfg_(cfg),
      refs_(references),
      unit_refs_(references),
      class_of_row_(std::move(class_of_row)),
      class_names_(std::move(class_names)) {
  if (references.rows() == 0 || references.cols() == 0) {
    throw DegenerateInputError("NsdModel: empty reference set");
  }
  if (class_of_row_.size() != references.rows()) throw ShapeError("NsdModel: class per row count");
  if (cfg_.k < 1) throw ValidationError("NsdModel: k must be at least 1");
  if (!all_finite(references)) throw ValidationError("NsdModel: non-finite reference");
  class_rows_.resize(class_names_.size());
  for (std::size_t i = 0; i < unit_refs_.rows(); ++i) {
    auto row = unit_refs_.row(i);
    const double norm = std::sqrt(dot(row, row));
    if (!(norm > 0.0)) throw DegenerateInputError("NsdModel: zero-norm reference row " + std::to_string(i));
    for (double& v : row) v /= norm;
    if (class_of_row_[i] >= class_names_.size()) throw ValidationError("NsdModel: class index out of range");
    class_rows_[class_of_row_[i]].push_back(i);
  }
  if (cfg_.tau_override) set_tau(*cfg_.tau_override);
}

void NsdModel::set_tau(double tau) {
  if (!std::isfinite(tau)) throw ValidationError("NsdModel: threshold must be finite");
  tau_ = tau;
  has_tau_ = true;
}

double nsd_similarity(std::span<const double> embedding, const NsdModel& model) {
  if (embedding.size() != model.dim()) {
    throw ShapeError("nsd_similarity: embedding dimension " + std::to_string(embedding.size()) +
                     " does not match references " + std::to_string(model.dim()));
  }
  const double norm = std::sqrt(dot(embedding, embedding));
  if (!(norm > 0.0)) throw DegenerateInputError("nsd_similarity: zero-norm embedding");
  const Matrix& refs = model.unit_references();
  std::vector<double> cosines(refs.rows());
  for (std::size_t i = 0; i < refs.rows(); ++i) cosines[i] = dot(embedding, refs.row(i)) / norm;
  const std::size_t k = std::min(model.config().k, cosines.size());
  std::partial_sort(cosines.begin(), cosines.begin() + static_cast<std::ptrdiff_t>(k), cosines.end(),
                    std::greater<>());
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) sum += cosines[i];
  return sum / static_cast<double>(k);
}

double confidence_scale(double raw, std::span<const double> probs, ScalingMode mode) {
  if (!std::isfinite(raw)) throw ValidationError("confidence_scale: non-finite similarity");
  if (mode == ScalingMode::kNone) return raw;
  if (probs.empty()) throw DegenerateInputError("confidence_scale: no class probabilities");
  return raw * *std::max_element(probs.begin(), probs.end());
}

double confidence_scale_logits(double raw, std::span<const double> logits, ScalingMode mode) {
  for (double l : logits) {
    if (!std::isfinite(l)) throw ValidationError("confidence_scale: non-finite logit");
  }
  return confidence_scale(raw, softmax(logits), mode);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DegenerateInputError("quantile: no values");
  if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("quantile: q outside [0,1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0) return values[lo];
  return values[lo] + frac * (values[hi] - values[lo]);
}

ThresholdFit fit_threshold(std::span<const double> dev_scores,
                           const std::optional<std::vector<bool>>& dev_is_ood,
                           double fallback_quantile) {
  if (dev_scores.empty()) throw DegenerateInputError("fit_threshold: empty dev set");
  ThresholdFit fit;
  if (dev_is_ood) {
    if (dev_is_ood->size() != dev_scores.size()) throw ShapeError("fit_threshold: flag count");
    const auto n_ood = std::count(dev_is_ood->begin(), dev_is_ood->end(), true);
    if (n_ood > 0 && static_cast<std::size_t>(n_ood) < dev_scores.size()) {
      std::vector<bool> is_known(dev_is_ood->size());
      for (std::size_t i = 0; i < is_known.size(); ++i) is_known[i] = !(*dev_is_ood)[i];
      const EerPoint point = eer_operating_point(dev_scores, is_known);
      fit.tau = point.threshold;
      fit.dev_eer = point.eer;
      return fit;
    }
  }
  std::vector<double> known;
  for (std::size_t i = 0; i < dev_scores.size(); ++i) {
    if (!dev_is_ood || !(*dev_is_ood)[i]) known.push_back(dev_scores[i]);
  }
  fit.tau = quantile(std::move(known), fallback_quantile);
  return fit;
}

std::vector<OodDecision> classify(const EmbeddingSet& embeddings, const Matrix& probs,
                                  const std::vector<std::string>& labels, const NsdModel& model,
                                  std::size_t threads) {
  if (!model.has_tau()) throw ValidationError("classify: detector threshold has not been fitted");
  if (probs.rows() != embeddings.size()) throw DataError("classify: probabilities are not aligned with embeddings");
  if (probs.cols() != labels.size()) throw ShapeError("classify: label vocabulary does not match probabilities");
  const std::size_t n = embeddings.size();
  std::vector<OodDecision> out(n);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      OodDecision& d = out[i];
      d.id = embeddings.ids[i];
      d.raw = nsd_similarity(embeddings.data.row(i), model);
      d.score = confidence_scale(d.raw, probs.row(i), model.config().scaling);
      d.is_novel = d.score < model.tau();
      if (d.is_novel) {
        d.predicted = kUnknownLabel;
        d.predicted_index = labels.size();
      } else {
        d.predicted_index = argmax(probs.row(i));
        d.predicted = labels[d.predicted_index];
      }
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    work(0, n);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    pool.emplace_back([&, t, begin, end] {
      try {
        work(begin, end);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<OodDecision> classify(const EmbeddingSet& embeddings, const LogitSet& logits,
                                  const NsdModel& model, std::size_t threads) {
  if (embeddings.ids != logits.ids) throw DataError("classify: embedding and logit ids are not aligned");
  return classify(embeddings, softmax_rows(logits.data), logits.labels, model, threads);
}

std::vector<std::uint8_t> encode_nsd(const NsdModel& model) {
  Writer w;
  w.out.assign(kNsdMagic, kNsdMagic + 4);
  w.u32(kNsdVersion);
  w.u32(static_cast<std::uint32_t>(model.config().k));
  w.u32(model.config().scaling == ScalingMode::kMaxSoftmax ? 0 : 1);
  w.u32(model.has_tau() ? 1 : 0);
  w.f64(model.tau());
  w.f64(model.config().fallback_quantile);
  w.u32(static_cast<std::uint32_t>(model.num_references()));
  w.u32(static_cast<std::uint32_t>(model.dim()));
  for (double v : model.references().values()) w.f64(v);
  for (std::size_t c : model.class_of_row()) w.u32(static_cast<std::uint32_t>(c));
  w.u32(static_cast<std::uint32_t>(model.class_names().size()));
  for (const auto& name : model.class_names()) w.str(name);
  return w.out;
}

NsdModel decode_nsd(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kNsdMagic, 4) != 0) throw FormatError(0, "bad magic, expected \"STND\"");
  r.pos = 4;
  if (r.u32("version") != kNsdVersion) throw FormatError(4, "unsupported version");
  NsdConfig cfg;
  const std::size_t k_at = r.pos;
  cfg.k = r.u32("k");
  if (cfg.k == 0) throw FormatError(k_at, "k must be at least 1");
  const std::size_t scaling_at = r.pos;
  const std::uint32_t scaling = r.u32("scaling");
  if (scaling > 1) throw FormatError(scaling_at, "unknown scaling mode");
  cfg.scaling = scaling == 0 ? ScalingMode::kMaxSoftmax : ScalingMode::kNone;
  const bool has_tau = r.u32("tau flag") != 0;
  const double tau = r.f64("tau");
  cfg.fallback_quantile = r.f64("fallback quantile");
  const std::uint32_t n = r.u32("header");
  const std::size_t d_at = r.pos;
  const std::uint32_t d = r.u32("header");
  if (n == 0 || d == 0) throw FormatError(d_at, "empty reference set");
  r.need(static_cast<std::size_t>(n) * d * 8, "reference payload");
  Matrix refs(n, d);
  for (double& v : refs.values()) v = r.f64("reference payload");
  std::vector<std::size_t> class_of_row(n);
  for (auto& c : class_of_row) c = r.u32("class index");
  const std::uint32_t n_classes = r.u32("class names");
  std::vector<std::string> names;
  for (std::uint32_t i = 0; i < n_classes; ++i) names.push_back(r.str("class names"));
  if (!r.at_end()) throw FormatError(r.pos, "trailing bytes");
  NsdModel model(refs, std::move(class_of_row), std::move(names), cfg);
  if (has_tau) model.set_tau(tau);
  return model;
}

void save_nsd(const std::filesystem::path& path, const NsdModel& model) {
  write_file_bytes(path, encode_nsd(model));
}

NsdModel load_nsd(const std::filesystem::path& path) {
  try {
    return decode_nsd(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(e.offset(), path.string() + ": " + e.detail());
  }
}

}  // namespace srctrace
