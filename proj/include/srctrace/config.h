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

#ifndef SRCTRACE_CONFIG_H_
#define SRCTRACE_CONFIG_H_

#include <filesystem>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "srctrace/metrics.h"
#include "srctrace/ood.h"
#include "srctrace/trainer.h"

namespace srctrace {

// Everything a run reads from the shared JSON config file. Keys are flat and
// documented in the README; unknown keys are rejected.
struct RunConfig {
  TrainConfig train;  // seed comes from the command line
  int epochs_re = 50;
  int epochs_fd = 50;
  std::vector<std::size_t> hidden = {64};
  std::size_t embedding_dim = 144;
  double head_init_scale = 0.05;
  NsdConfig nsd;
  EceConfig ece;
};

void validate(const RunConfig& cfg);

RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const RunConfig& cfg);

RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);

// Layer sizes {input_dim, hidden..., embedding_dim, k}.
std::vector<std::size_t> model_sizes(const RunConfig& cfg, std::size_t input_dim, std::size_t k);

}  // namespace srctrace

#endif  // SRCTRACE_CONFIG_H_
