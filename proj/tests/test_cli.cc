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

// Black-box tests of the srctrace executable: exit codes, file layout and
// byte-level determinism.

#include <sys/wait.h>

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "gtest/gtest.h"
#include "srctrace/dataio.h"
#include "srctrace/evaluation.h"
#include "srctrace/mlp.h"
#include "test_util.h"

namespace srctrace {
namespace {

namespace fs = std::filesystem;
using testing_util::TempDir;

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(SRCTRACE_CLI_PATH) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::ordered_json read_json(const fs::path& p) { return nlohmann::ordered_json::parse(slurp(p)); }

// Small dataset plus a short-training config shared by the tests below.
class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli");
    ASSERT_EQ(cli("gen-synth --out " + data().string() + " --seed 7 --n-per-source 40 --n-real 80"), 0);
    std::ofstream(config()) << R"({"epochs_re": 3, "epochs_fd": 4, "batch_size": 32})";
    ASSERT_EQ(cli("train --data " + data().string() + " --out " + (root() / "two").string() +
                  " --config " + config().string() + " --seed 7"),
              0);
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }

  static fs::path root() { return dir_->path(); }
  static fs::path data() { return root() / "data"; }
  static fs::path config() { return root() / "short.json"; }
  static fs::path system() { return root() / "two" / "fd" / "system"; }
  static fs::path manifest() { return data() / "manifest.jsonl"; }
  static int cli(const std::string& args) { return run_cli(args, root() / "log.txt"); }
  static std::string log() { return slurp(root() / "log.txt"); }

  static TempDir* dir_;
};
TempDir* CliTest::dir_ = nullptr;

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(cli(""), 2);
  EXPECT_EQ(cli("no-such-command"), 2);
  EXPECT_EQ(cli("gen-synth --out " + (root() / "k1").string() + " --k-sources 1"), 2) << log();
  EXPECT_EQ(cli("evaluate --manifest x.jsonl"), 2);
  EXPECT_EQ(cli("train --data " + data().string() + " --out " + (root() / "x").string() + " --stage fd"), 2);
  EXPECT_EQ(cli("evaluate --system " + system().string() + " --manifest " + manifest().string() + " --out " +
                (root() / "x").string() + " --scaling cubic"),
            2);
}

TEST_F(CliTest, GenSynthIsDeterministic) {
  const fs::path again = root() / "again";
  ASSERT_EQ(cli("gen-synth --out " + again.string() + " --seed 7 --n-per-source 40 --n-real 80"), 0);
  for (const char* f : {"features.steb", "manifest.jsonl", "re_manifest.jsonl", "run.json"}) {
    EXPECT_EQ(slurp(data() / f), slurp(again / f)) << f;
  }
  ASSERT_EQ(cli("gen-synth --out " + (root() / "other").string() + " --seed 8 --n-per-source 40 --n-real 80"), 0);
  EXPECT_NE(slurp(data() / "features.steb"), slurp(root() / "other" / "features.steb"));
}

TEST_F(CliTest, GenSynthManifestShape) {
  const Manifest m = load_manifest(manifest());
  EXPECT_EQ(m.vocabulary().size(), 5u);
  EXPECT_TRUE(m.has_ood(Split::kEval));
  EXPECT_TRUE(m.has_ood(Split::kDev));
  for (const ManifestRecord* r : m.split(Split::kTrain)) EXPECT_FALSE(r->is_ood);
}

TEST_F(CliTest, TwoStageWritesBothStages) {
  for (const char* f : {"re/checkpoint.stck", "re/trace.csv", "re/oc.json", "fd/checkpoint.stck", "fd/trace.csv",
                        "fd/system/eval.steb", "fd/system/eval.stlg", "run.json"}) {
    EXPECT_TRUE(fs::exists(root() / "two" / f)) << f;
  }
  const auto rec = read_json(root() / "two" / "run.json");
  EXPECT_EQ(rec["config"]["epochs_fd"], 4);
  EXPECT_EQ(rec["stage"], "two-stage");
  // Header plus one row per epoch.
  std::ifstream trace(root() / "two" / "fd" / "trace.csv");
  std::string line;
  int lines = 0;
  while (std::getline(trace, line)) ++lines;
  EXPECT_EQ(lines, 5);
}

TEST_F(CliTest, FdOnlyHasNoRealEmphasisArtifacts) {
  const fs::path out = root() / "fdonly";
  ASSERT_EQ(cli("train --stage fd-only --data " + data().string() + " --out " + out.string() + " --config " +
                config().string() + " --seed 7"),
            0)
      << log();
  EXPECT_TRUE(fs::exists(out / "fd" / "checkpoint.stck"));
  EXPECT_FALSE(fs::exists(out / "re"));
}

TEST_F(CliTest, TrainingIsDeterministic) {
  const fs::path out = root() / "two_again";
  ASSERT_EQ(cli("train --data " + data().string() + " --out " + out.string() + " --config " + config().string() +
                " --seed 7"),
            0);
  EXPECT_EQ(slurp(out / "fd" / "checkpoint.stck"), slurp(root() / "two" / "fd" / "checkpoint.stck"));
  EXPECT_EQ(slurp(out / "fd" / "trace.csv"), slurp(root() / "two" / "fd" / "trace.csv"));
}

TEST_F(CliTest, ResumeWithMismatchedSizes) {
  const fs::path bad = root() / "bad.stck";
  Rng rng(1);
  save_checkpoint(bad, MlpModel::random({32, 10, 2}, rng));
  EXPECT_EQ(cli("train --stage fd --resume " + bad.string() + " --data " + data().string() + " --out " +
                (root() / "resumed").string() + " --config " + config().string()),
            3);
  EXPECT_NE(log().find("layer sizes"), std::string::npos) << log();
  // A matching checkpoint resumes fine.
  EXPECT_EQ(cli("train --stage fd --resume " + (root() / "two" / "re" / "checkpoint.stck").string() + " --data " +
                data().string() + " --out " + (root() / "resumed").string() + " --config " + config().string()),
            0)
      << log();
}

TEST_F(CliTest, EvaluateReportKeysAndDeterminism) {
  const fs::path out = root() / "eval";
  ASSERT_EQ(cli("evaluate --system " + system().string() + " --manifest " + manifest().string() + " --out " +
                out.string()),
            0)
      << log();
  const std::vector<std::string> expected{"accuracy", "macro_f1", "eer", "nll", "ece", "frechet"};
  for (const char* f : {"in_domain.json", "ood.json"}) {
    const auto j = read_json(out / f);
    std::vector<std::string> keys;
    for (const auto& [k, v] : j.items()) keys.push_back(k);
    EXPECT_EQ(keys, expected) << f;
  }
  EXPECT_TRUE(read_json(out / "in_domain.json")["eer"].is_null());
  EXPECT_TRUE(read_json(out / "ood.json")["eer"].is_number());

  const fs::path again = root() / "eval_again";
  ASSERT_EQ(cli("--threads 3 evaluate --system " + system().string() + " --manifest " + manifest().string() +
                " --out " + again.string()),
            0);
  EXPECT_EQ(slurp(out / "in_domain.json"), slurp(again / "in_domain.json"));
  EXPECT_EQ(slurp(out / "ood.json"), slurp(again / "ood.json"));

  ASSERT_EQ(cli("evaluate --format csv --system " + system().string() + " --manifest " + manifest().string() +
                " --out " + (root() / "eval_csv").string()),
            0);
  EXPECT_EQ(slurp(root() / "eval_csv" / "in_domain.csv").substr(0, 38), "accuracy,macro_f1,eer,nll,ece,frechet\n");
}

TEST_F(CliTest, EvaluatePerfectPredictions) {
  // One-hot logits that match the manifest labels exactly.
  const Manifest m = load_manifest(manifest());
  const ScoredSystem real = load_system_dir(system());
  LogitSet perfect = real.logits;
  for (std::size_t i = 0; i < perfect.size(); ++i) {
    const ManifestRecord* rec = m.find(perfect.ids[i]);
    for (std::size_t c = 0; c < perfect.labels.size(); ++c) perfect.data(i, c) = 0.0;
    if (!rec->is_ood) perfect.data(i, *m.label_index(rec->label)) = 80.0;
  }
  const fs::path emb = root() / "perfect.steb", lg = root() / "perfect.stlg";
  write_embeddings(emb, real.embeddings);
  write_logits(lg, perfect);
  const fs::path out = root() / "perfect";
  ASSERT_EQ(cli("evaluate --embeddings " + emb.string() + " --logits " + lg.string() + " --manifest " +
                manifest().string() + " --out " + out.string()),
            0)
      << log();
  const auto j = read_json(out / "in_domain.json");
  EXPECT_EQ(j["accuracy"], 1.0);
  EXPECT_EQ(j["macro_f1"], 1.0);
  EXPECT_LT(j["nll"].get<double>(), 1e-30);
  EXPECT_LT(j["ece"].get<double>(), 1e-30);
}

TEST_F(CliTest, FrechetAgainstSameEmbeddingsIsZero) {
  const Manifest m = load_manifest(manifest());
  const ScoredSystem sys = load_system_dir(system());
  const ScoredSystem known = select_rows(sys, split_ids(m, Split::kEval, false));
  const fs::path same = root() / "known_eval.steb";
  write_embeddings(same, known.embeddings);
  const fs::path out = root() / "frechet_self";
  ASSERT_EQ(cli("evaluate --system " + system().string() + " --manifest " + manifest().string() + " --out " +
                out.string() + " --frechet-against " + same.string()),
            0)
      << log();
  EXPECT_NEAR(read_json(out / "in_domain.json")["frechet"].get<double>(), 0.0, 1e-8);
}

TEST_F(CliTest, EvaluateDataErrors) {
  // --ood with a manifest that has no OOD rows.
  const Manifest m = load_manifest(manifest());
  std::vector<ManifestRecord> known;
  for (const auto& rec : m.records()) {
    if (!rec.is_ood) known.push_back(rec);
  }
  write_manifest(root() / "no_ood.jsonl", Manifest(known));
  EXPECT_EQ(cli("evaluate --ood --system " + system().string() + " --manifest " + (root() / "no_ood.jsonl").string() +
                " --out " + (root() / "x").string()),
            3)
      << log();

  const fs::path broken = root() / "broken";
  fs::create_directories(broken);
  for (const char* f : {"train.steb", "train.stlg", "dev.steb", "dev.stlg", "eval.steb", "eval.stlg"}) {
    fs::copy_file(system() / f, broken / f, fs::copy_options::overwrite_existing);
  }
  {
    std::fstream f(broken / "dev.steb", std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
  }
  EXPECT_EQ(cli("evaluate --system " + broken.string() + " --manifest " + manifest().string() + " --out " +
                (root() / "x").string()),
            3);
  EXPECT_NE(log().find("offset 0"), std::string::npos) << log();
  EXPECT_EQ(cli("evaluate --system " + (root() / "missing").string() + " --manifest " + manifest().string() +
                " --out " + (root() / "x").string()),
            3);
}

TEST_F(CliTest, OodDecisionsAndSummary) {
  const fs::path out = root() / "ood";
  ASSERT_EQ(cli("--threads 1 ood --system " + system().string() + " --manifest " + manifest().string() + " --out " +
                out.string()),
            0)
      << log();
  const auto summary = read_json(out / "summary.json");
  for (const char* key : {"tau", "dev_eer", "detection_eer", "flagged_fraction", "n_eval"}) {
    EXPECT_TRUE(summary.contains(key)) << key;
  }
  std::ifstream decisions(out / "decisions.jsonl");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(decisions, line)) {
    const auto d = nlohmann::json::parse(line);
    EXPECT_EQ(d["is_novel"].get<bool>(), d["score"].get<double>() < summary["tau"].get<double>());
    if (d["is_novel"].get<bool>()) {
      EXPECT_EQ(d["predicted"], "unknown");
    }
    ++rows;
  }
  EXPECT_EQ(rows, summary["n_eval"].get<std::size_t>());

  // Threads and a reloaded detector reproduce the decisions byte for byte.
  const fs::path threaded = root() / "ood_threads";
  ASSERT_EQ(cli("--threads 4 ood --system " + system().string() + " --manifest " + manifest().string() +
                " --out " + threaded.string()),
            0);
  EXPECT_EQ(slurp(out / "decisions.jsonl"), slurp(threaded / "decisions.jsonl"));
  const fs::path reloaded = root() / "ood_reloaded";
  ASSERT_EQ(cli("ood --detector " + (out / "nsd.stnd").string() + " --system " + system().string() +
                " --manifest " + manifest().string() + " --out " + reloaded.string()),
            0)
      << log();
  EXPECT_EQ(slurp(out / "decisions.jsonl"), slurp(reloaded / "decisions.jsonl"));
}

TEST_F(CliTest, OodTauOverrideFlagsEverythingBelow) {
  const fs::path out = root() / "ood_tau";
  ASSERT_EQ(cli("ood --tau 2 --system " + system().string() + " --manifest " + manifest().string() + " --out " +
                out.string()),
            0);
  EXPECT_EQ(read_json(out / "summary.json")["flagged_fraction"], 1.0);
}

TEST_F(CliTest, SelfFusionMatchesSingleSystem) {
  const fs::path single = root() / "single", fused = root() / "fused";
  ASSERT_EQ(cli("evaluate --system " + system().string() + " --manifest " + manifest().string() + " --out " +
                single.string()),
            0);
  ASSERT_EQ(cli("fuse --a " + system().string() + " --b " + system().string() + " --manifest " +
                manifest().string() + " --out " + fused.string()),
            0)
      << log();
  const auto a = read_json(single / "in_domain.json");
  const auto b = read_json(fused / "in_domain.json");
  for (const char* key : {"accuracy", "macro_f1", "nll", "ece"}) {
    EXPECT_NEAR(a[key].get<double>(), b[key].get<double>(), 1e-12) << key;
  }
  EXPECT_TRUE(fs::exists(fused / "system" / "eval.steb"));
  EXPECT_EQ(read_embeddings(fused / "system" / "eval.steb").dim(), 2 * read_embeddings(system() / "eval.steb").dim());
}

}  // namespace
}  // namespace srctrace
