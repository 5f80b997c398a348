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

#ifndef SRCTRACE_COMMANDS_H_
#define SRCTRACE_COMMANDS_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "srctrace/config.h"
#include "srctrace/evaluation.h"
#include "srctrace/fusion.h"
#include "srctrace/synth.h"

namespace srctrace {

// Bumped whenever a report or run-record layout changes.
inline constexpr int kReportSchemaVersion = 1;
inline constexpr const char* kRunRecordFile = "run.json";

enum class ReportFormat { kJson, kCsv };

// Thread count from SRCTRACE_THREADS, else the hardware concurrency.
std::size_t default_threads();

void cmd_gen_synth(const SynthConfig& cfg, const std::filesystem::path& out_dir);

enum class Stage { kRe, kFd, kTwoStage, kFdOnly };
std::optional<Stage> parse_stage(std::string_view name);
const char* stage_name(Stage stage);

struct TrainArgs {
  std::filesystem::path data_dir;
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> resume;  // initial checkpoint
  Stage stage = Stage::kTwoStage;
  std::uint64_t seed = 0;
};

// Summary of a train run, also written to run.json.
struct TrainSummary {
  std::optional<double> re_best_dev_accuracy;
  std::optional<double> fd_best_dev_accuracy;
  std::optional<double> centroid_ratio_init;
  std::optional<double> centroid_ratio_fd;
};

// Layout: out/re/{checkpoint.stck,trace.csv,oc.json} for the real-emphasis
// stage, out/fd/{checkpoint.stck,trace.csv,system/} for the dispersion stage.
TrainSummary cmd_train(const TrainArgs& args);

// Runs the checkpoint on every manifest sample of the feature file and writes
// a system directory.
void cmd_export(const std::filesystem::path& data_dir, const std::filesystem::path& checkpoint,
                const std::filesystem::path& out_dir);

// Where a system's embeddings and logits come from.
struct SystemSource {
  std::optional<std::filesystem::path> dir;
  std::optional<std::filesystem::path> embeddings;
  std::optional<std::filesystem::path> logits;
};
ScoredSystem load_system(const SystemSource& source);

struct EvaluateArgs {
  SystemSource system;
  std::filesystem::path manifest;
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> frechet_against;
  ReportFormat format = ReportFormat::kJson;
  bool require_ood = false;
  std::optional<std::size_t> k;
  std::optional<double> tau;
  std::optional<ScalingMode> scaling;
  std::size_t threads = 1;
};

// Writes in_domain.{json,csv} and, with OOD eval rows, ood.{json,csv}.
EvalResult cmd_evaluate(const EvaluateArgs& args);

struct OodArgs {
  SystemSource system;
  std::filesystem::path manifest;
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> detector;  // previously saved nsd.stnd
  std::optional<std::size_t> k;
  std::optional<double> tau;
  std::optional<ScalingMode> scaling;
  std::size_t threads = 1;
};

// Writes decisions.jsonl for the eval split, summary.json and nsd.stnd.
nlohmann::ordered_json cmd_ood(const OodArgs& args);

struct FuseArgs {
  SystemSource a;
  SystemSource b;
  std::filesystem::path manifest;
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> config;
  ReportFormat format = ReportFormat::kJson;
  FusionMode mode = FusionMode::kProbabilities;
  std::optional<std::size_t> k;
  std::optional<double> tau;
  std::size_t threads = 1;
};

// Writes the fused system directory plus reports as cmd_evaluate does.
EvalResult cmd_fuse(const FuseArgs& args);

// Serialized report text in the requested format.
std::string format_report(const MetricReport& report, ReportFormat format);

}  // namespace srctrace

#endif  // SRCTRACE_COMMANDS_H_
