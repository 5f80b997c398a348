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

// srctrace: synthetic data, two-stage training, evaluation, OOD detection and
// fusion for source-tracing systems.

#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "srctrace/commands.h"
#include "srctrace/error.h"

namespace {

namespace fs = std::filesystem;
using namespace srctrace;

// CLI11 fills plain values; these hold the raw flags until validation.
struct OptionalFlags {
  std::size_t k = 0;
  double tau = 0.0;
  std::string scaling;
};

void add_system_flags(CLI::App* cmd, SystemSource& src) {
  cmd->add_option("--system", src.dir, "System directory with {train,dev,eval}.{steb,stlg}");
  cmd->add_option("--embeddings", src.embeddings, "STEB file covering every manifest id");
  cmd->add_option("--logits", src.logits, "STLG file covering every manifest id");
}

void add_detector_flags(CLI::App* cmd, OptionalFlags& f, bool with_scaling) {
  cmd->add_option("--k", f.k, "Top-k cosine similarities averaged by the detector")->check(CLI::PositiveNumber);
  cmd->add_option("--tau", f.tau, "Fixed detector threshold instead of fitting on dev");
  if (with_scaling) {
    cmd->add_option("--scaling", f.scaling, "Confidence scaling: max-softmax or none")
        ->check(CLI::IsMember({"max-softmax", "none"}));
  }
}

std::optional<ScalingMode> scaling_of(CLI::App* cmd, const OptionalFlags& f) {
  if (cmd->count("--scaling") == 0) return std::nullopt;
  return parse_scaling(f.scaling);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evaluation, fusion and training toolkit for audio deepfake source tracing"};
  app.require_subcommand(1);
  std::size_t threads = default_threads();
  app.add_option("--threads", threads, "Worker threads for detector scoring (default: SRCTRACE_THREADS or all cores)")
      ->check(CLI::PositiveNumber);

  // gen-synth
  SynthConfig synth;
  fs::path synth_out;
  auto* gen = app.add_subcommand("gen-synth", "Write a seeded Gaussian-cluster dataset");
  gen->add_option("--out", synth_out, "Output directory")->required();
  gen->add_option("--seed", synth.seed, "Root seed");
  gen->add_option("--k-sources", synth.k_sources, "Number of in-domain sources");
  gen->add_option("--n-per-source", synth.n_per_source, "Samples per source");
  gen->add_option("--ood-sources", synth.ood_sources, "Held-out sources confined to dev/eval");
  gen->add_option("--n-real", synth.n_real, "Bona fide samples");
  gen->add_option("--dim", synth.dim, "Feature dimension");
  gen->add_option("--separation", synth.separation, "Distance of each cluster center from the origin");
  gen->add_option("--noise", synth.noise, "Per-coordinate noise standard deviation");

  // train
  TrainArgs train;
  std::string stage = "two-stage";
  auto* tr = app.add_subcommand("train", "Train the real-emphasis and/or fake-dispersion stages");
  tr->add_option("--data", train.data_dir, "Dataset directory (features.steb, manifest.jsonl, re_manifest.jsonl)")
      ->required();
  tr->add_option("--out", train.out_dir, "Output directory")->required();
  tr->add_option("--stage", stage, "re, fd, two-stage or fd-only")
      ->check(CLI::IsMember({"re", "fd", "two-stage", "fd-only"}));
  tr->add_option("--config", train.config, "JSON config file");
  tr->add_option("--resume", train.resume, "Initial checkpoint");
  tr->add_option("--seed", train.seed, "Root seed");

  // export
  fs::path export_data, export_ckpt, export_out;
  auto* ex = app.add_subcommand("export", "Write a system directory from a checkpoint");
  ex->add_option("--data", export_data, "Dataset directory")->required();
  ex->add_option("--checkpoint", export_ckpt, "Dispersion-stage checkpoint")->required();
  ex->add_option("--out", export_out, "Output system directory")->required();

  // evaluate
  EvaluateArgs eval;
  OptionalFlags eval_flags;
  std::string eval_format = "json";
  auto* ev = app.add_subcommand("evaluate", "Compute in-domain and OOD metric reports");
  add_system_flags(ev, eval.system);
  ev->add_option("--manifest", eval.manifest, "JSONL manifest")->required();
  ev->add_option("--out", eval.out_dir, "Report directory")->required();
  ev->add_option("--config", eval.config, "JSON config file");
  ev->add_option("--format", eval_format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  ev->add_flag("--ood", eval.require_ood, "Fail unless eval has OOD rows");
  ev->add_option("--frechet-against", eval.frechet_against, "STEB file compared with in-domain eval embeddings");
  add_detector_flags(ev, eval_flags, true);

  // ood
  OodArgs ood;
  OptionalFlags ood_flags;
  auto* od = app.add_subcommand("ood", "Novel-source detection on the eval split");
  add_system_flags(od, ood.system);
  od->add_option("--manifest", ood.manifest, "JSONL manifest")->required();
  od->add_option("--out", ood.out_dir, "Output directory")->required();
  od->add_option("--config", ood.config, "JSON config file");
  od->add_option("--detector", ood.detector, "Previously fitted nsd.stnd");
  add_detector_flags(od, ood_flags, true);

  // fuse
  FuseArgs fuse;
  OptionalFlags fuse_flags;
  std::string fuse_format = "json";
  std::string fuse_mode = "probabilities";
  auto* fu = app.add_subcommand("fuse", "Fuse two systems and evaluate the ensemble");
  fu->add_option("--a", fuse.a.dir, "First system directory")->required();
  fu->add_option("--b", fuse.b.dir, "Second system directory")->required();
  fu->add_option("--manifest", fuse.manifest, "JSONL manifest")->required();
  fu->add_option("--out", fuse.out_dir, "Output directory")->required();
  fu->add_option("--config", fuse.config, "JSON config file");
  fu->add_option("--format", fuse_format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  fu->add_option("--mode", fuse_mode, "probabilities or logits")->check(CLI::IsMember({"probabilities", "logits"}));
  add_detector_flags(fu, fuse_flags, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gen) {
      cmd_gen_synth(synth, synth_out);
    } else if (*tr) {
      train.stage = *parse_stage(stage);
      const TrainSummary s = cmd_train(train);
      if (s.re_best_dev_accuracy) std::cout << "re best dev accuracy: " << *s.re_best_dev_accuracy << "\n";
      if (s.fd_best_dev_accuracy) std::cout << "fd best dev accuracy: " << *s.fd_best_dev_accuracy << "\n";
    } else if (*ex) {
      cmd_export(export_data, export_ckpt, export_out);
    } else if (*ev) {
      eval.format = eval_format == "csv" ? ReportFormat::kCsv : ReportFormat::kJson;
      if (ev->count("--k")) eval.k = eval_flags.k;
      if (ev->count("--tau")) eval.tau = eval_flags.tau;
      eval.scaling = scaling_of(ev, eval_flags);
      eval.threads = threads;
      const EvalResult r = cmd_evaluate(eval);
      std::cout << format_report(r.in_domain, ReportFormat::kJson);
    } else if (*od) {
      if (od->count("--k")) ood.k = ood_flags.k;
      if (od->count("--tau")) ood.tau = ood_flags.tau;
      ood.scaling = scaling_of(od, ood_flags);
      ood.threads = threads;
      std::cout << cmd_ood(ood).dump(2) << "\n";
    } else if (*fu) {
      fuse.format = fuse_format == "csv" ? ReportFormat::kCsv : ReportFormat::kJson;
      fuse.mode = fuse_mode == "logits" ? FusionMode::kLogits : FusionMode::kProbabilities;
      if (fu->count("--k")) fuse.k = fuse_flags.k;
      if (fu->count("--tau")) fuse.tau = fuse_flags.tau;
      fuse.threads = threads;
      const EvalResult r = cmd_fuse(fuse);
      std::cout << format_report(r.in_domain, ReportFormat::kJson);
    }
  } catch (const Error& e) {
    std::cerr << "srctrace: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "srctrace: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "srctrace: internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
