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

#include "srctrace/commands.h"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "srctrace/error.h"
#include "srctrace/mlp.h"
#include "srctrace/optim.h"
#include "srctrace/trainer.h"

namespace srctrace {
namespace {

namespace fs = std::filesystem;

constexpr const char* kCheckpointFile = "checkpoint.stck";
constexpr const char* kTraceFile = "trace.csv";

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) { write_text(path, j.dump(2) + "\n"); }

nlohmann::ordered_json run_record(const char* command) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["schema_version"] = kReportSchemaVersion;
  return j;
}

RunConfig resolve_config(const std::optional<fs::path>& path) {
  return path ? load_run_config(*path) : RunConfig{};
}

// Applies the detector overrides shared by evaluate, ood and fuse.
NsdConfig nsd_config(const RunConfig& cfg, std::optional<std::size_t> k, std::optional<double> tau,
                     std::optional<ScalingMode> scaling) {
  NsdConfig nsd = cfg.nsd;
  if (k) {
    if (*k < 1) throw UsageError("--k must be at least 1");
    nsd.k = *k;
  }
  if (tau) nsd.tau_override = *tau;
  if (scaling) nsd.scaling = *scaling;
  return nsd;
}

nlohmann::ordered_json nsd_json(const NsdConfig& nsd) {
  nlohmann::ordered_json j;
  j["k"] = nsd.k;
  j["scaling"] = scaling_name(nsd.scaling);
  j["fallback_quantile"] = nsd.fallback_quantile;
  j["tau_override"] = nsd.tau_override ? nlohmann::ordered_json(*nsd.tau_override) : nlohmann::ordered_json(nullptr);
  return j;
}

nlohmann::ordered_json source_json(const SystemSource& s) {
  nlohmann::ordered_json j;
  if (s.dir) j["dir"] = s.dir->string();
  if (s.embeddings) j["embeddings"] = s.embeddings->string();
  if (s.logits) j["logits"] = s.logits->string();
  return j;
}

const char* extension(ReportFormat format) { return format == ReportFormat::kJson ? ".json" : ".csv"; }

void write_reports(const fs::path& dir, const EvalResult& result, ReportFormat format) {
  write_text(dir / (std::string("in_domain") + extension(format)), format_report(result.in_domain, format));
  if (result.ood) write_text(dir / (std::string("ood") + extension(format)), format_report(*result.ood, format));
}

// Labelled rows of one split; OOD rows are left out.
LabeledData labeled_split(const EmbeddingSet& features, const Manifest& manifest, Split split) {
  const auto ids = split_ids(manifest, split, false);
  LabeledData out;
  out.features = select_rows(features, ids).data;
  out.num_classes = manifest.vocabulary().size();
  for (const auto& id : ids) out.labels.push_back(*manifest.label_index(manifest.find(id)->label));
  return out;
}

void write_trace(const fs::path& path, const StageResult& r, const TrainConfig& cfg) {
  std::string text = "epoch,loss,dev_accuracy,beta,lr\n";
  for (std::size_t e = 0; e < r.loss_trace.size(); ++e) {
    const int epoch = static_cast<int>(e) + 1;
    text += std::to_string(epoch) + "," + fmt(r.loss_trace[e]) + "," + fmt(r.dev_accuracy_trace[e]) + "," +
            fmt(r.beta_trace[e]) + "," + fmt(lr_at(epoch, cfg.lr, cfg.lr_decay, cfg.lr_decay_epochs)) + "\n";
  }
  write_text(path, text);
}

nlohmann::ordered_json stage_json(const StageResult& r) {
  nlohmann::ordered_json j;
  j["epochs"] = r.loss_trace.size();
  j["best_epoch"] = r.best_epoch;
  j["best_dev_accuracy"] = r.best_dev_accuracy;
  j["final_loss"] = r.loss_trace.empty() ? 0.0 : r.loss_trace.back();
  j["npair_skipped_batches"] = r.npair_skipped_batches;
  return j;
}

ScoredSystem run_model(const MlpModel& model, const EmbeddingSet& features, const std::vector<std::string>& ids,
                       const std::vector<std::string>& labels) {
  const EmbeddingSet x = select_rows(features, ids);
  if (x.dim() != model.input_dim()) throw ShapeError("checkpoint input dimension does not match the features");
  if (model.output_dim() != labels.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(model.output_dim()) + " outputs but the manifest has " +
                          std::to_string(labels.size()) + " train labels");
  }
  const ForwardCache cache = model.forward(x.data);
  EmbeddingSet emb{x.ids, cache.embedding()};
  LogitSet logits{x.ids, labels, cache.logits()};
  // Files store f32; round here so the in-memory system equals what is read back.
  for (double& v : emb.data.values()) v = static_cast<double>(static_cast<float>(v));
  for (double& v : logits.data.values()) v = static_cast<double>(static_cast<float>(v));
  return make_system(emb, logits);
}

void export_system(const MlpModel& model, const EmbeddingSet& features, const Manifest& manifest,
                   const fs::path& dir) {
  std::vector<std::string> ids;
  for (const auto& rec : manifest.records()) ids.push_back(rec.id);
  write_system_dir(dir, run_model(model, features, ids, manifest.vocabulary()), manifest);
}

}  // namespace

std::size_t default_threads() {
  if (const char* env = std::getenv("SRCTRACE_THREADS")) {
    char* end = nullptr;
    const unsigned long n = std::strtoul(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::string format_report(const MetricReport& report, ReportFormat format) {
  return format == ReportFormat::kJson ? to_json(report).dump(2) + "\n" : to_csv(report);
}

void cmd_gen_synth(const SynthConfig& cfg, const fs::path& out_dir) {
  const SynthData data = generate_synth(cfg);
  write_synth(out_dir, data);
  auto rec = run_record("gen-synth");
  rec["seed"] = cfg.seed;
  rec["k_sources"] = cfg.k_sources;
  rec["n_per_source"] = cfg.n_per_source;
  rec["ood_sources"] = cfg.ood_sources;
  rec["n_real"] = cfg.n_real;
  rec["dim"] = cfg.dim;
  rec["separation"] = cfg.separation;
  rec["noise"] = cfg.noise;
  write_json(out_dir / kRunRecordFile, rec);
}

std::optional<Stage> parse_stage(std::string_view name) {
  if (name == "re") return Stage::kRe;
  if (name == "fd") return Stage::kFd;
  if (name == "two-stage") return Stage::kTwoStage;
  if (name == "fd-only") return Stage::kFdOnly;
  return std::nullopt;
}

const char* stage_name(Stage stage) {
  switch (stage) {
    case Stage::kRe: return "re";
    case Stage::kFd: return "fd";
    case Stage::kTwoStage: return "two-stage";
    case Stage::kFdOnly: return "fd-only";
  }
  return "";
}

TrainSummary cmd_train(const TrainArgs& args) {
  const RunConfig cfg = resolve_config(args.config);
  if (args.stage == Stage::kFd && !args.resume) {
    throw UsageError("--stage fd needs --resume with a real-emphasis or dispersion checkpoint");
  }
  const EmbeddingSet features = read_embeddings(args.data_dir / kFeaturesFile);
  const Manifest manifest = load_manifest(args.data_dir / kManifestFile);
  const std::size_t k = manifest.vocabulary().size();
  const auto re_sizes = model_sizes(cfg, features.dim(), 2);
  const auto fd_sizes = model_sizes(cfg, features.dim(), k);

  const bool run_re = args.stage == Stage::kRe || args.stage == Stage::kTwoStage;
  const bool run_fd = args.stage != Stage::kRe;

  // Hidden layers are drawn first, so the 2-way and K-way fresh models share
  // their embedding network.
  Rng init_rng(derive_seed(args.seed, "model.init"));
  MlpModel model;
  if (args.resume) {
    const MlpModel loaded = load_checkpoint(*args.resume);
    const bool is_re = loaded.sizes() == re_sizes;
    const bool is_fd = loaded.sizes() == fd_sizes;
    if ((run_re && !is_re) || (!run_re && !is_re && !is_fd)) {
      throw CheckpointError(args.resume->string() + ": layer sizes do not match the configured model");
    }
    model = loaded;
  } else {
    model = MlpModel::random(run_re ? re_sizes : fd_sizes, init_rng);
  }

  fs::create_directories(args.out_dir);
  auto rec = run_record("train");
  rec["stage"] = stage_name(args.stage);
  rec["seed"] = args.seed;
  rec["data"] = args.data_dir.string();
  rec["resume"] = args.resume ? nlohmann::ordered_json(args.resume->string()) : nlohmann::ordered_json(nullptr);
  rec["config"] = to_json(cfg);

  TrainSummary summary;
  if (run_re) {
    const Manifest re_manifest = load_manifest(args.data_dir / kReManifestFile);
    if (re_manifest.vocabulary() != std::vector<std::string>{kRealClass, kFakeClass}) {
      throw DataError(std::string(kReManifestFile) + ": train labels must be exactly \"" + kRealClass +
                      "\" and \"" + kFakeClass + "\"");
    }
    TrainConfig tc = cfg.train;
    tc.seed = args.seed;
    tc.epochs = cfg.epochs_re;
    const StageResult re = train_re(model, labeled_split(features, re_manifest, Split::kTrain),
                                    labeled_split(features, re_manifest, Split::kDev), tc);
    const fs::path dir = args.out_dir / "re";
    fs::create_directories(dir);
    save_checkpoint(dir / kCheckpointFile, re.model);
    write_trace(dir / kTraceFile, re, tc);
    nlohmann::ordered_json oc;
    oc["alpha"] = re.oc.alpha;
    oc["m_real"] = re.oc.m_real;
    oc["m_fake"] = re.oc.m_fake;
    oc["direction"] = re.oc.direction;
    write_json(dir / "oc.json", oc);
    rec["re"] = stage_json(re);
    summary.re_best_dev_accuracy = re.best_dev_accuracy;
    model = re.model;
  }

  if (run_fd) {
    const LabeledData train = labeled_split(features, manifest, Split::kTrain);
    const LabeledData dev = labeled_split(features, manifest, Split::kDev);
    if (model.output_dim() != k) {
      Rng head_rng(derive_seed(args.seed, "model.head"));
      model = replace_head(model, k, head_rng, cfg.head_init_scale);
    }
    // Reference point for the dispersion check: the untrained network.
    Rng fresh_rng(derive_seed(args.seed, "model.init"));
    const MlpModel fresh = MlpModel::random(fd_sizes, fresh_rng);
    summary.centroid_ratio_init = centroid_distance_ratio(fresh.forward(train.features).embedding(), train.labels);

    TrainConfig tc = cfg.train;
    tc.seed = args.seed;
    tc.epochs = cfg.epochs_fd;
    const StageResult fd = train_fd(model, train, dev, tc);
    summary.centroid_ratio_fd = centroid_distance_ratio(fd.model.forward(train.features).embedding(), train.labels);
    summary.fd_best_dev_accuracy = fd.best_dev_accuracy;

    const fs::path dir = args.out_dir / "fd";
    fs::create_directories(dir);
    save_checkpoint(dir / kCheckpointFile, fd.model);
    write_trace(dir / kTraceFile, fd, tc);
    export_system(fd.model, features, manifest, dir / "system");
    auto fd_rec = stage_json(fd);
    fd_rec["centroid_ratio_init"] = *summary.centroid_ratio_init;
    fd_rec["centroid_ratio_final"] = *summary.centroid_ratio_fd;
    rec["fd"] = fd_rec;
  }
  write_json(args.out_dir / kRunRecordFile, rec);
  return summary;
}

void cmd_export(const fs::path& data_dir, const fs::path& checkpoint, const fs::path& out_dir) {
  const EmbeddingSet features = read_embeddings(data_dir / kFeaturesFile);
  const Manifest manifest = load_manifest(data_dir / kManifestFile);
  export_system(load_checkpoint(checkpoint), features, manifest, out_dir);
  auto rec = run_record("export");
  rec["data"] = data_dir.string();
  rec["checkpoint"] = checkpoint.string();
  write_json(out_dir / kRunRecordFile, rec);
}

ScoredSystem load_system(const SystemSource& source) {
  if (source.dir) {
    if (source.embeddings || source.logits) throw UsageError("give either a system directory or embedding/logit files");
    return load_system_dir(*source.dir);
  }
  if (!source.embeddings || !source.logits) {
    throw UsageError("a system needs a directory or both an embedding and a logit file");
  }
  return make_system(read_embeddings(*source.embeddings), read_logits(*source.logits));
}

EvalResult cmd_evaluate(const EvaluateArgs& args) {
  const RunConfig cfg = resolve_config(args.config);
  EvalOptions opts;
  opts.nsd = nsd_config(cfg, args.k, args.tau, args.scaling);
  opts.ece = cfg.ece;
  opts.require_ood = args.require_ood;
  opts.threads = args.threads;
  if (args.frechet_against) opts.frechet_against = read_embeddings(*args.frechet_against);
  const Manifest manifest = load_manifest(args.manifest);
  const EvalResult result = evaluate_system(load_system(args.system), manifest, opts);

  fs::create_directories(args.out_dir);
  write_reports(args.out_dir, result, args.format);
  auto rec = run_record("evaluate");
  rec["system"] = source_json(args.system);
  rec["manifest"] = args.manifest.string();
  rec["frechet_against"] =
      args.frechet_against ? nlohmann::ordered_json(args.frechet_against->string()) : nlohmann::ordered_json(nullptr);
  rec["nsd"] = nsd_json(opts.nsd);
  rec["ece_bins"] = opts.ece.m_bins;
  if (result.detector) rec["tau"] = result.detector->model.tau();
  write_json(args.out_dir / kRunRecordFile, rec);
  return result;
}

nlohmann::ordered_json cmd_ood(const OodArgs& args) {
  const RunConfig cfg = resolve_config(args.config);
  const Manifest manifest = load_manifest(args.manifest);
  const ScoredSystem system = load_system(args.system);
  if (system.labels() != manifest.vocabulary()) {
    throw ValidationError("system label vocabulary does not match the manifest's train labels");
  }
  NsdConfig nsd = nsd_config(cfg, args.k, args.tau, args.scaling);

  FittedDetector det;
  if (args.detector) {
    det.model = load_nsd(*args.detector);
    if (args.k) det.model.config().k = *args.k;
    if (args.scaling) det.model.config().scaling = *args.scaling;
    if (args.tau) det.model.set_tau(*args.tau);
    if (!det.model.has_tau()) throw DataError(args.detector->string() + ": detector has no fitted threshold");
    det.fit.tau = det.model.tau();
    nsd = det.model.config();
  } else {
    det = fit_detector(system, manifest, nsd, args.threads);
  }

  const auto eval_ids = split_ids(manifest, Split::kEval);
  if (eval_ids.empty()) throw DataError("manifest has no eval records");
  const ScoredSystem eval = select_rows(system, eval_ids);
  const auto decisions = classify(eval.embeddings, eval.probs, eval.labels(), det.model, args.threads);

  fs::create_directories(args.out_dir);
  std::string lines;
  std::size_t flagged = 0;
  std::vector<double> scores;
  std::vector<bool> is_known;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const OodDecision& d = decisions[i];
    nlohmann::ordered_json j;
    j["id"] = d.id;
    j["raw"] = d.raw;
    j["score"] = d.score;
    j["is_novel"] = d.is_novel;
    j["predicted"] = d.predicted;
    lines += j.dump() + "\n";
    flagged += d.is_novel ? 1 : 0;
    scores.push_back(d.score);
    is_known.push_back(!manifest.find(eval_ids[i])->is_ood);
  }
  write_text(args.out_dir / "decisions.jsonl", lines);
  save_nsd(args.out_dir / "nsd.stnd", det.model);

  nlohmann::ordered_json summary;
  summary["tau"] = det.model.tau();
  summary["dev_eer"] = det.fit.dev_eer ? nlohmann::ordered_json(*det.fit.dev_eer) : nlohmann::ordered_json(nullptr);
  const bool both = std::count(is_known.begin(), is_known.end(), true) > 0 &&
                    std::count(is_known.begin(), is_known.end(), false) > 0;
  summary["detection_eer"] = both ? nlohmann::ordered_json(eer(scores, is_known)) : nlohmann::ordered_json(nullptr);
  summary["flagged_fraction"] = static_cast<double>(flagged) / static_cast<double>(decisions.size());
  summary["n_eval"] = decisions.size();
  summary["nsd"] = nsd_json(nsd);
  write_json(args.out_dir / "summary.json", summary);

  auto rec = run_record("ood");
  rec["system"] = source_json(args.system);
  rec["manifest"] = args.manifest.string();
  rec["detector"] = args.detector ? nlohmann::ordered_json(args.detector->string()) : nlohmann::ordered_json(nullptr);
  rec["nsd"] = nsd_json(nsd);
  write_json(args.out_dir / kRunRecordFile, rec);
  return summary;
}

EvalResult cmd_fuse(const FuseArgs& args) {
  const RunConfig cfg = resolve_config(args.config);
  EvalOptions opts;
  opts.nsd = nsd_config(cfg, args.k, args.tau, std::nullopt);
  opts.ece = cfg.ece;
  opts.threads = args.threads;
  const Manifest manifest = load_manifest(args.manifest);
  const ScoredSystem fused = fuse_systems(load_system(args.a), load_system(args.b), args.mode);
  const EvalResult result = evaluate_system(fused, manifest, opts);

  fs::create_directories(args.out_dir);
  write_system_dir(args.out_dir / "system", fused, manifest);
  write_reports(args.out_dir, result, args.format);
  auto rec = run_record("fuse");
  rec["a"] = source_json(args.a);
  rec["b"] = source_json(args.b);
  rec["manifest"] = args.manifest.string();
  rec["mode"] = args.mode == FusionMode::kProbabilities ? "probabilities" : "logits";
  rec["nsd"] = nsd_json(opts.nsd);
  rec["ece_bins"] = opts.ece.m_bins;
  if (result.detector) rec["tau"] = result.detector->model.tau();
  write_json(args.out_dir / kRunRecordFile, rec);
  return result;
}

}  // namespace srctrace
