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

#include "srctrace/config.h"

#include <set>
#include <string>
#include <type_traits>

#include "srctrace/dataio.h"
#include "srctrace/error.h"

namespace srctrace {
namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "lr",          "weight_decay",   "lr_decay",          "lr_decay_epochs", "epochs_re",
      "epochs_fd",   "batch_size",     "grad_accum",        "hidden",          "embedding_dim",
      "head_init_scale", "mixup_eta",  "mixup_alpha",       "npair_enabled",   "npair_normalize",
      "beta_warmup_epochs", "beta_init", "beta_final",      "beta_final_epoch", "oc_alpha",
      "oc_m_real",   "oc_m_fake",      "nsd_k",             "nsd_scaling",     "nsd_fallback_quantile",
      "ece_bins"};
  return keys;
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
    if (!it->is_number_unsigned()) {
      throw ValidationError(std::string("config: key \"") + key + "\" must be a non-negative integer");
    }
  }
  try {
    out = it->template get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(std::string("config: key \"") + key + "\" has the wrong type");
  }
}

}  // namespace

void validate(const RunConfig& cfg) {
  validate(cfg.train);
  if (cfg.epochs_re < 1 || cfg.epochs_fd < 1) throw ValidationError("config: epochs must be at least 1");
  if (cfg.embedding_dim < 1) throw ValidationError("config: embedding_dim must be positive");
  for (std::size_t h : cfg.hidden) {
    if (h < 1) throw ValidationError("config: hidden sizes must be positive");
  }
  if (!(cfg.head_init_scale >= 0.0)) throw ValidationError("config: head_init_scale must be non-negative");
  if (cfg.nsd.k < 1) throw ValidationError("config: nsd_k must be at least 1");
  if (!(cfg.nsd.fallback_quantile >= 0.0 && cfg.nsd.fallback_quantile <= 1.0)) {
    throw ValidationError("config: nsd_fallback_quantile must lie in [0,1]");
  }
  if (cfg.ece.m_bins < 1) throw ValidationError("config: ece_bins must be at least 1");
  const auto& b = cfg.train.beta;
  if (b.warmup_epochs < 0 || b.final_epoch <= b.warmup_epochs || b.init < 0.0 || b.final_value < b.init) {
    throw ValidationError("config: beta schedule must be non-negative and nondecreasing");
  }
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("config: top level must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!known_keys().count(key)) throw ValidationError("config: unknown key \"" + key + "\"");
  }
  RunConfig cfg;
  TrainConfig& t = cfg.train;
  read(j, "lr", t.lr);
  read(j, "weight_decay", t.weight_decay);
  read(j, "lr_decay", t.lr_decay);
  read(j, "lr_decay_epochs", t.lr_decay_epochs);
  read(j, "epochs_re", cfg.epochs_re);
  read(j, "epochs_fd", cfg.epochs_fd);
  read(j, "batch_size", t.batch_size);
  read(j, "grad_accum", t.grad_accum);
  read(j, "hidden", cfg.hidden);
  read(j, "embedding_dim", cfg.embedding_dim);
  read(j, "head_init_scale", cfg.head_init_scale);
  read(j, "mixup_eta", t.mixup.eta);
  read(j, "mixup_alpha", t.mixup.alpha);
  read(j, "npair_enabled", t.npair_enabled);
  read(j, "npair_normalize", t.normalize_npair);
  read(j, "beta_warmup_epochs", t.beta.warmup_epochs);
  read(j, "beta_init", t.beta.init);
  read(j, "beta_final", t.beta.final_value);
  read(j, "beta_final_epoch", t.beta.final_epoch);
  read(j, "oc_alpha", t.oc.alpha);
  read(j, "oc_m_real", t.oc.m_real);
  read(j, "oc_m_fake", t.oc.m_fake);
  read(j, "nsd_k", cfg.nsd.k);
  read(j, "nsd_fallback_quantile", cfg.nsd.fallback_quantile);
  read(j, "ece_bins", cfg.ece.m_bins);
  if (j.contains("nsd_scaling")) {
    std::string name;
    read(j, "nsd_scaling", name);
    const auto mode = parse_scaling(name);
    if (!mode) throw ValidationError("config: nsd_scaling must be \"max-softmax\" or \"none\"");
    cfg.nsd.scaling = *mode;
  }
  validate(cfg);
  return cfg;
}

nlohmann::ordered_json to_json(const RunConfig& cfg) {
  const TrainConfig& t = cfg.train;
  nlohmann::ordered_json j;
  j["lr"] = t.lr;
  j["weight_decay"] = t.weight_decay;
  j["lr_decay"] = t.lr_decay;
  j["lr_decay_epochs"] = t.lr_decay_epochs;
  j["epochs_re"] = cfg.epochs_re;
  j["epochs_fd"] = cfg.epochs_fd;
  j["batch_size"] = t.batch_size;
  j["grad_accum"] = t.grad_accum;
  j["hidden"] = cfg.hidden;
  j["embedding_dim"] = cfg.embedding_dim;
  j["head_init_scale"] = cfg.head_init_scale;
  j["mixup_eta"] = t.mixup.eta;
  j["mixup_alpha"] = t.mixup.alpha;
  j["npair_enabled"] = t.npair_enabled;
  j["npair_normalize"] = t.normalize_npair;
  j["beta_warmup_epochs"] = t.beta.warmup_epochs;
  j["beta_init"] = t.beta.init;
  j["beta_final"] = t.beta.final_value;
  j["beta_final_epoch"] = t.beta.final_epoch;
  j["oc_alpha"] = t.oc.alpha;
  j["oc_m_real"] = t.oc.m_real;
  j["oc_m_fake"] = t.oc.m_fake;
  j["nsd_k"] = cfg.nsd.k;
  j["nsd_scaling"] = scaling_name(cfg.nsd.scaling);
  j["nsd_fallback_quantile"] = cfg.nsd.fallback_quantile;
  j["ece_bins"] = cfg.ece.m_bins;
  return j;
}

RunConfig parse_run_config(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(e.byte, std::string("config: ") + e.what());
  }
  return run_config_from_json(j);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_run_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::vector<std::size_t> model_sizes(const RunConfig& cfg, std::size_t input_dim, std::size_t k) {
  std::vector<std::size_t> sizes = {input_dim};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(cfg.embedding_dim);
  sizes.push_back(k);
  return sizes;
}

}  // namespace srctrace
