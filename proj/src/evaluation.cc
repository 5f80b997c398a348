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

#include "srctrace/evaluation.h"

#include <algorithm>
#include <cmath>

#include "srctrace/error.h"

namespace srctrace {
namespace {

std::vector<bool> ood_flags(const Manifest& manifest, const std::vector<std::string>& ids) {
  std::vector<bool> flags;
  flags.reserve(ids.size());
  for (const auto& id : ids) flags.push_back(manifest.find(id)->is_ood);
  return flags;
}

std::vector<std::size_t> known_indices(const Manifest& manifest, const std::vector<std::string>& ids) {
  std::vector<std::size_t> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(*manifest.label_index(manifest.find(id)->label));
  return out;
}

std::optional<double> frechet_between(const Matrix& a, const Matrix& b) {
  if (a.rows() < 2 || b.rows() < 2) return std::nullopt;
  return frechet_distance(estimate_moments(a), estimate_moments(b));
}

MetricReport closed_set_report(const PredictionBatch& batch, const EceConfig& ece_cfg) {
  MetricReport r;
  r.accuracy = accuracy(batch);
  r.macro_f1 = macro_f1(batch);
  r.nll = nll(batch);
  r.ece = ece(batch, ece_cfg);
  return r;
}

// Scaled detector scores of every row.
std::vector<double> scaled_scores(const ScoredSystem& rows, const NsdModel& model, std::size_t threads) {
  NsdModel scorer = model;
  scorer.set_tau(0.0);
  const auto decisions = classify(rows.embeddings, rows.probs, rows.labels(), scorer, threads);
  std::vector<double> scores;
  scores.reserve(decisions.size());
  for (const auto& d : decisions) scores.push_back(d.score);
  return scores;
}

}  // namespace

ScoredSystem make_system(const EmbeddingSet& embeddings, const LogitSet& logits) {
  validate(embeddings);
  validate(logits);
  if (embeddings.size() != logits.size()) {
    throw DataError("embedding and logit files hold different numbers of rows (" +
                    std::to_string(embeddings.size()) + " vs " + std::to_string(logits.size()) + ")");
  }
  ScoredSystem out;
  out.embeddings = embeddings;
  out.logits = select_rows(logits, embeddings.ids);
  out.probs = softmax_rows(out.logits.data);
  return out;
}

ScoredSystem select_rows(const ScoredSystem& system, const std::vector<std::string>& ids) {
  const auto index = index_ids(system.embeddings.ids);
  ScoredSystem out;
  out.embeddings = select_rows(system.embeddings, ids);
  out.logits = select_rows(system.logits, ids);
  out.probs = Matrix(ids.size(), system.probs.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto src = system.probs.row(index.at(ids[i]));
    std::copy(src.begin(), src.end(), out.probs.row(i).begin());
  }
  return out;
}

ScoredSystem load_system_dir(const std::filesystem::path& dir) {
  EmbeddingSet emb;
  LogitSet logits;
  for (const char* split : kSplitNames) {
    const auto emb_path = dir / (std::string(split) + ".steb");
    const auto logit_path = dir / (std::string(split) + ".stlg");
    if (!std::filesystem::exists(emb_path) || !std::filesystem::exists(logit_path)) {
      throw DataError(dir.string() + ": missing " + split + " split (" + split + ".steb / " + split + ".stlg)");
    }
    EmbeddingSet e = read_embeddings(emb_path);
    LogitSet l = read_logits(logit_path);
    if (emb.data.cols() == 0) {
      emb.data = Matrix(0, e.dim());
      logits.labels = l.labels;
      logits.data = Matrix(0, l.data.cols());
    }
    if (e.dim() != emb.dim()) throw DataError(emb_path.string() + ": embedding dimension differs across splits");
    if (l.labels != logits.labels) throw DataError(logit_path.string() + ": label vocabulary differs across splits");
    emb.ids.insert(emb.ids.end(), e.ids.begin(), e.ids.end());
    logits.ids.insert(logits.ids.end(), l.ids.begin(), l.ids.end());
    emb.data = vstack(emb.data, e.data);
    logits.data = vstack(logits.data, l.data);
  }
  return make_system(emb, logits);
}

void write_system_dir(const std::filesystem::path& dir, const ScoredSystem& system,
                      const Manifest& manifest) {
  std::filesystem::create_directories(dir);
  for (Split split : {Split::kTrain, Split::kDev, Split::kEval}) {
    const ScoredSystem part = select_rows(system, split_ids(manifest, split));
    const std::string name = split_name(split);
    write_embeddings(dir / (name + ".steb"), part.embeddings);
    write_logits(dir / (name + ".stlg"), part.logits);
  }
}

std::vector<std::string> split_ids(const Manifest& manifest, Split split, std::optional<bool> is_ood) {
  std::vector<std::string> ids;
  for (const ManifestRecord* rec : manifest.split(split)) {
    if (!is_ood || rec->is_ood == *is_ood) ids.push_back(rec->id);
  }
  return ids;
}

FittedDetector fit_detector(const ScoredSystem& system, const Manifest& manifest, const NsdConfig& nsd,
                            std::size_t threads) {
  const auto train_ids = split_ids(manifest, Split::kTrain);
  if (train_ids.empty()) throw DataError("manifest has no train records to use as detector references");
  const ScoredSystem train = select_rows(system, train_ids);
  NsdModel model(train.embeddings.data, known_indices(manifest, train_ids), manifest.vocabulary(), nsd);

  FittedDetector out{std::move(model), {}};
  if (nsd.tau_override) {
    out.fit.tau = *nsd.tau_override;
    return out;
  }
  const auto dev_ids = split_ids(manifest, Split::kDev);
  if (dev_ids.empty()) throw DataError("manifest has no dev records to fit the detector threshold");
  const ScoredSystem dev = select_rows(system, dev_ids);
  const auto scores = scaled_scores(dev, out.model, threads);
  std::optional<std::vector<bool>> flags;
  if (manifest.has_ood(Split::kDev)) flags = ood_flags(manifest, dev_ids);
  out.fit = fit_threshold(scores, flags, nsd.fallback_quantile);
  out.model.set_tau(out.fit.tau);
  return out;
}

Matrix open_set_probs(const Matrix& probs, const std::vector<OodDecision>& decisions) {
  if (decisions.size() != probs.rows()) throw ShapeError("open_set_probs: decision count");
  const std::size_t k = probs.cols();
  Matrix out(probs.rows(), k + 1);
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const double u = decisions[i].is_novel ? 1.0 : 0.0;
    for (std::size_t c = 0; c < k; ++c) out(i, c) = probs(i, c) * (1.0 - u);
    out(i, k) = u;
  }
  return out;
}

EvalResult evaluate_system(const ScoredSystem& system, const Manifest& manifest, const EvalOptions& opts) {
  if (system.labels() != manifest.vocabulary()) {
    throw ValidationError("system label vocabulary does not match the manifest's train labels");
  }
  const auto known_ids = split_ids(manifest, Split::kEval, false);
  const auto ood_ids = split_ids(manifest, Split::kEval, true);
  if (known_ids.empty()) throw DataError("manifest has no in-domain eval records");
  if (opts.require_ood && ood_ids.empty()) throw DataError("OOD evaluation requested but eval has no OOD records");

  const ScoredSystem known = select_rows(system, known_ids);
  EvalResult result;
  result.in_domain = closed_set_report({known.probs, known_indices(manifest, known_ids)}, opts.ece);

  std::optional<double> frechet;
  if (opts.frechet_against) {
    validate(*opts.frechet_against);
    if (opts.frechet_against->dim() != known.embeddings.dim()) {
      throw ShapeError("Frechet reference embeddings have a different dimension");
    }
    frechet = frechet_between(known.embeddings.data, opts.frechet_against->data);
  } else if (!ood_ids.empty()) {
    frechet = frechet_between(known.embeddings.data, select_rows(system.embeddings, ood_ids).data);
  }
  result.in_domain.frechet = frechet;
  if (ood_ids.empty()) return result;

  FittedDetector det = fit_detector(system, manifest, opts.nsd, opts.threads);
  const auto eval_ids = split_ids(manifest, Split::kEval);
  const ScoredSystem eval = select_rows(system, eval_ids);
  result.decisions = classify(eval.embeddings, eval.probs, eval.labels(), det.model, opts.threads);

  const std::size_t k = manifest.vocabulary().size();
  std::vector<std::size_t> truth;
  std::vector<double> scores;
  std::vector<bool> is_known;
  for (std::size_t i = 0; i < eval_ids.size(); ++i) {
    const ManifestRecord* rec = manifest.find(eval_ids[i]);
    truth.push_back(rec->is_ood ? k : *manifest.label_index(rec->label));
    scores.push_back(result.decisions[i].score);
    is_known.push_back(!rec->is_ood);
  }
  MetricReport ood = closed_set_report({open_set_probs(eval.probs, result.decisions), truth}, opts.ece);
  ood.eer = eer(scores, is_known);
  ood.frechet = frechet;
  result.ood = ood;
  result.detector = std::move(det);
  return result;
}

}  // namespace srctrace
