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

#include "srctrace/fusion.h"

#include <cmath>
#include <sstream>

#include "gtest/gtest.h"
#include "srctrace/error.h"
#include "srctrace/metrics.h"
#include "test_util.h"

namespace srctrace {
namespace {

// Three known classes around separated centers plus one OOD class confined to
// dev and eval. Logits are noisy functions of the class so metrics are
// neither perfect nor trivial.
struct Toy {
  Manifest manifest;
  ScoredSystem system;
};

Toy make_toy(std::uint64_t seed, std::size_t dim = 6) {
  Rng rng(seed);
  const std::vector<std::string> labels{"src_a", "src_b", "src_c"};
  std::ostringstream jsonl;
  EmbeddingSet emb;
  LogitSet logits;
  logits.labels = labels;
  std::vector<std::vector<double>> emb_rows, logit_rows;
  const char* splits[] = {"train", "dev", "eval"};
  for (int s = 0; s < 3; ++s) {
    for (std::size_t i = 0; i < 24; ++i) {
      const bool ood = s > 0 && i >= 18;
      const std::size_t c = ood ? 3 : i % 3;
      const std::string id = std::string(splits[s]) + "_" + std::to_string(i);
      jsonl << "{\"id\":\"" << id << "\",\"label\":\"" << (ood ? "novel" : labels[c]) << "\",\"split\":\""
            << splits[s] << "\"";
      if (s > 0) jsonl << ",\"is_ood\":" << (ood ? "true" : "false");
      jsonl << "}\n";
      std::vector<double> e(dim), l(3);
      for (std::size_t j = 0; j < dim; ++j) e[j] = (j % 4 == c ? 3.0 : 0.0) + 0.6 * rng.normal();
      for (std::size_t k = 0; k < 3; ++k) l[k] = (k == c ? 1.5 : 0.0) + rng.normal();
      emb.ids.push_back(id);
      logits.ids.push_back(id);
      emb_rows.push_back(e);
      logit_rows.push_back(l);
    }
  }
  emb.data = Matrix(emb_rows.size(), dim);
  logits.data = Matrix(logit_rows.size(), 3);
  for (std::size_t i = 0; i < emb_rows.size(); ++i) {
    std::copy(emb_rows[i].begin(), emb_rows[i].end(), emb.data.row(i).begin());
    std::copy(logit_rows[i].begin(), logit_rows[i].end(), logits.data.row(i).begin());
  }
  return {parse_manifest(jsonl.str()), make_system(emb, logits)};
}

void expect_reports_equal(const MetricReport& a, const MetricReport& b, double tol) {
  EXPECT_NEAR(a.accuracy, b.accuracy, tol);
  EXPECT_NEAR(a.macro_f1, b.macro_f1, tol);
  EXPECT_NEAR(a.nll, b.nll, tol);
  EXPECT_NEAR(a.ece, b.ece, tol);
  EXPECT_EQ(a.eer.has_value(), b.eer.has_value());
  if (a.eer && b.eer) {
    EXPECT_NEAR(*a.eer, *b.eer, tol);
  }
  EXPECT_EQ(a.frechet.has_value(), b.frechet.has_value());
}

TEST(Concat, Examples) {
  const EmbeddingSet a{{"x"}, Matrix::from_rows({{1, 2}})};
  EXPECT_EQ(concat_embeddings(a, a).data, Matrix::from_rows({{1, 2, 1, 2}}));
  Rng rng(1);
  const EmbeddingSet big{testing_util::make_ids(3), testing_util::random_matrix(rng, 3, 144)};
  EXPECT_EQ(concat_embeddings(big, big).dim(), 288u);
  const EmbeddingSet other{{"y"}, Matrix::from_rows({{1, 2}})};
  EXPECT_THROW(concat_embeddings(a, other), DataError);
}

TEST(Concat, MatchesById) {
  const EmbeddingSet a{{"p", "q"}, Matrix::from_rows({{1}, {2}})};
  const EmbeddingSet b{{"q", "p"}, Matrix::from_rows({{20}, {10}})};
  EXPECT_EQ(concat_embeddings(a, b).data, Matrix::from_rows({{1, 10}, {2, 20}}));
}

TEST(AverageProbs, Examples) {
  Rng rng(2);
  const LogitSet a{testing_util::make_ids(5), {"u", "v", "w"}, testing_util::random_matrix(rng, 5, 3)};
  EXPECT_EQ(average_probs(a, a), softmax_rows(a.data));

  const LogitSet one{{"x"}, {"u", "v"}, Matrix::from_rows({{800, 0}})};
  const LogitSet two{{"x"}, {"u", "v"}, Matrix::from_rows({{0, 800}})};
  EXPECT_EQ(average_probs(one, two), Matrix::from_rows({{0.5, 0.5}}));

  const LogitSet renamed{a.ids, {"u", "w", "v"}, a.data};
  EXPECT_THROW(average_probs(a, renamed), ValidationError);
}

TEST(AverageProbs, RowsSumToOneAndCommute) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(10), k = 2 + rng.uniform_index(6);
    const LogitSet a{testing_util::make_ids(n), testing_util::make_ids(k, "c"), testing_util::random_matrix(rng, n, k, 5.0)};
    const LogitSet b{a.ids, a.labels, testing_util::random_matrix(rng, n, k, 5.0)};
    for (FusionMode mode : {FusionMode::kProbabilities, FusionMode::kLogits}) {
      const Matrix p = average_probs(a, b, mode);
      EXPECT_EQ(p, average_probs(b, a, mode));
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0;
        for (double v : p.row(i)) {
          EXPECT_GE(v, 0.0);
          s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
    }
  }
}

TEST(FuseSystems, LogitModeAgreesWithAveragedRawLogits) {
  Rng rng(4);
  const LogitSet a{testing_util::make_ids(6), {"u", "v", "w"}, testing_util::random_matrix(rng, 6, 3)};
  const LogitSet b{a.ids, a.labels, testing_util::random_matrix(rng, 6, 3)};
  const EmbeddingSet e{a.ids, testing_util::random_matrix(rng, 6, 2)};
  const ScoredSystem fused = fuse_systems(make_system(e, a), make_system(e, b), FusionMode::kLogits);
  EXPECT_LE(testing_util::relative_frobenius(fused.probs, average_probs(a, b, FusionMode::kLogits)), 1e-12);
  EXPECT_LE(testing_util::relative_frobenius(softmax_rows(fused.logits.data), fused.probs), 1e-12);
}

TEST(FuseAndEvaluate, ComplementaryErrorsBeatEitherMember) {
  // Truth {0,0,1,1}; A is confidently right on the first half, B on the second.
  const std::vector<std::string> ids{"s1", "s2", "s3", "s4"};
  auto logits_of = [&](std::initializer_list<std::initializer_list<double>> probs) {
    LogitSet l{ids, {"x", "y"}, Matrix::from_rows(probs)};
    for (double& v : l.data.values()) v = std::log(v);
    return l;
  };
  const LogitSet a = logits_of({{0.9, 0.1}, {0.9, 0.1}, {0.6, 0.4}, {0.6, 0.4}});
  const LogitSet b = logits_of({{0.4, 0.6}, {0.4, 0.6}, {0.1, 0.9}, {0.1, 0.9}});
  const std::vector<std::size_t> truth{0, 0, 1, 1};
  const double acc_a = accuracy({softmax_rows(a.data), truth});
  const double acc_b = accuracy({softmax_rows(b.data), truth});
  const double fused = accuracy({average_probs(a, b), truth});
  EXPECT_EQ(acc_a, 0.5);
  EXPECT_EQ(acc_b, 0.5);
  EXPECT_EQ(fused, 1.0);
}

TEST(FuseAndEvaluate, SelfFusionIdentity) {
  const Toy t = make_toy(5);
  const EvalOptions opts;
  const EvalResult single = evaluate_system(t.system, t.manifest, opts);
  const EvalResult self = fuse_and_evaluate(t.system, t.system, t.manifest, opts);
  ASSERT_TRUE(single.ood.has_value());
  ASSERT_TRUE(self.ood.has_value());
  expect_reports_equal(self.in_domain, single.in_domain, 1e-12);
  expect_reports_equal(*self.ood, *single.ood, 1e-12);
  ASSERT_EQ(self.decisions.size(), single.decisions.size());
  for (std::size_t i = 0; i < self.decisions.size(); ++i) {
    EXPECT_NEAR(self.decisions[i].raw, single.decisions[i].raw, 1e-12);
    EXPECT_EQ(self.decisions[i].is_novel, single.decisions[i].is_novel);
  }
}

TEST(FuseAndEvaluate, MemberSwapLeavesMetricsUnchanged) {
  const Toy a = make_toy(6);
  Toy b = make_toy(7);
  // Same ids and labels, different scores.
  const EvalOptions opts;
  const EvalResult ab = fuse_and_evaluate(a.system, b.system, a.manifest, opts);
  const EvalResult ba = fuse_and_evaluate(b.system, a.system, a.manifest, opts);
  expect_reports_equal(ab.in_domain, ba.in_domain, 1e-12);
  EXPECT_NEAR(*ab.in_domain.frechet, *ba.in_domain.frechet, 1e-9 * std::max(1.0, *ab.in_domain.frechet));
  expect_reports_equal(*ab.ood, *ba.ood, 1e-12);
}

TEST(FuseAndEvaluate, VocabularyMismatchRejected) {
  Toy a = make_toy(8);
  Toy b = make_toy(9);
  b.system.logits.labels = {"src_c", "src_b", "src_a"};
  EXPECT_THROW(fuse_systems(a.system, b.system), ValidationError);
}

}  // namespace
}  // namespace srctrace
