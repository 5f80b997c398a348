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

#include "srctrace/synth.h"

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "srctrace/error.h"
#include "srctrace/rng.h"

namespace srctrace {
namespace {

std::vector<double> random_center(Rng& rng, std::size_t dim, double radius) {
  std::vector<double> c(dim);
  double norm2 = 0.0;
  for (double& v : c) {
    v = rng.normal();
    norm2 += v * v;
  }
  const double s = radius / std::sqrt(norm2);
  for (double& v : c) v *= s;
  return c;
}

std::string make_id(const char* prefix, std::size_t group, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s%02zu_%05zu", prefix, group, i);
  return buf;
}

std::string source_label(std::size_t s) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "source_%02zu", s);
  return buf;
}

Split split_for(std::size_t i, std::size_t n) {
  if (2 * i < n) return Split::kTrain;
  if (4 * i < 3 * n) return Split::kDev;
  return Split::kEval;
}

}  // namespace

void validate(const SynthConfig& cfg) {
  if (cfg.k_sources < 2) throw UsageError("gen-synth: k_sources must be at least 2");
  if (cfg.n_per_source < 4) throw UsageError("gen-synth: n_per_source must be at least 4");
  if (cfg.n_real < 4) throw UsageError("gen-synth: n_real must be at least 4");
  if (cfg.dim < 1) throw UsageError("gen-synth: dim must be positive");
  if (!(cfg.separation >= 0.0) || !(cfg.noise > 0.0)) {
    throw UsageError("gen-synth: separation must be non-negative and noise positive");
  }
}

SynthData generate_synth(const SynthConfig& cfg) {
  validate(cfg);
  Rng centers_rng(derive_seed(cfg.seed, "synth.centers"));
  Rng samples_rng(derive_seed(cfg.seed, "synth.samples"));

  std::vector<std::vector<double>> sources;
  for (std::size_t s = 0; s < cfg.k_sources; ++s) {
    sources.push_back(random_center(centers_rng, cfg.dim, cfg.separation));
  }
  std::vector<std::vector<double>> ood;
  for (std::size_t s = 0; s < cfg.ood_sources; ++s) {
    ood.push_back(random_center(centers_rng, cfg.dim, cfg.separation));
  }
  const std::vector<double> real = random_center(centers_rng, cfg.dim, cfg.separation);

  std::vector<std::string> ids;
  std::vector<double> values;
  std::vector<ManifestRecord> records;
  std::vector<ManifestRecord> re_records;
  auto draw = [&](const std::vector<double>& center, std::string id) {
    for (double c : center) values.push_back(c + cfg.noise * samples_rng.normal());
    ids.push_back(std::move(id));
  };

  for (std::size_t i = 0; i < cfg.n_real; ++i) {
    draw(real, make_id("real", 0, i));
    re_records.push_back({ids.back(), kRealClass, split_for(i, cfg.n_real), false});
  }
  for (std::size_t s = 0; s < sources.size(); ++s) {
    for (std::size_t i = 0; i < cfg.n_per_source; ++i) {
      draw(sources[s], make_id("src", s, i));
      const Split split = split_for(i, cfg.n_per_source);
      records.push_back({ids.back(), source_label(s), split, false});
      re_records.push_back({ids.back(), kFakeClass, split, false});
    }
  }
  for (std::size_t s = 0; s < ood.size(); ++s) {
    for (std::size_t i = 0; i < cfg.n_per_source; ++i) {
      draw(ood[s], make_id("ood", s, i));
      const Split split = 2 * i < cfg.n_per_source ? Split::kDev : Split::kEval;
      records.push_back({ids.back(), "ood_" + std::to_string(s), split, true});
    }
  }

  SynthData out;
  out.features.ids = std::move(ids);
  out.features.data = Matrix(out.features.ids.size(), cfg.dim);
  std::copy(values.begin(), values.end(), out.features.data.values().begin());
  // Payloads are stored as f32; round now so in-memory and on-disk data agree.
  for (double& v : out.features.data.values()) v = static_cast<double>(static_cast<float>(v));
  out.manifest = Manifest(std::move(records));
  out.re_manifest = Manifest(std::move(re_records));
  return out;
}

void write_synth(const std::filesystem::path& dir, const SynthData& data) {
  std::filesystem::create_directories(dir);
  write_embeddings(dir / kFeaturesFile, data.features);
  write_manifest(dir / kManifestFile, data.manifest);
  write_manifest(dir / kReManifestFile, data.re_manifest);
}

}  // namespace srctrace
