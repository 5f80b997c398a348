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

#ifndef SRCTRACE_SYNTH_H_
#define SRCTRACE_SYNTH_H_

#include <cstdint>
#include <filesystem>

#include "srctrace/dataio.h"

namespace srctrace {

// Gaussian-cluster stand-in for a source-tracing corpus. Every source and the
// bona fide class get a random center at distance `separation` from the
// origin; samples add isotropic noise with standard deviation `noise`.
struct SynthConfig {
  std::uint64_t seed = 7;
  std::size_t k_sources = 5;
  std::size_t n_per_source = 400;
  std::size_t ood_sources = 1;
  std::size_t n_real = 800;
  std::size_t dim = 32;
  double separation = 5.0;
  double noise = 1.0;
};

void validate(const SynthConfig& cfg);

struct SynthData {
  EmbeddingSet features;  // every sample, D = cfg.dim
  Manifest manifest;      // source labels; OOD rows only in dev/eval
  Manifest re_manifest;   // "bonafide" / "spoof" labels, no OOD rows
};

// Sources are split 50/25/25 into train/dev/eval; OOD sources half dev, half
// eval.
SynthData generate_synth(const SynthConfig& cfg);

inline constexpr const char* kFeaturesFile = "features.steb";
inline constexpr const char* kManifestFile = "manifest.jsonl";
inline constexpr const char* kReManifestFile = "re_manifest.jsonl";
inline constexpr const char* kRealClass = "bonafide";
inline constexpr const char* kFakeClass = "spoof";

void write_synth(const std::filesystem::path& dir, const SynthData& data);

}  // namespace srctrace

#endif  // SRCTRACE_SYNTH_H_
