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

#include "srctrace/metrics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "srctrace/error.h"

namespace srctrace {
namespace {

constexpr double kRowSumTolerance = 1e-9;
constexpr double kProbFloor = 1e-12;
constexpr double kFrechetNegativeTolerance = 1e-8;

void require_nonempty(const PredictionBatch& batch, const char* what) {
  if (batch.size() == 0) throw DegenerateInputError(std::string(what) + ": empty batch");
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

void validate(const PredictionBatch& batch) {
  require_nonempty(batch, "PredictionBatch");
  if (batch.probs.rows() != batch.true_idx.size()) {
    throw ShapeError("PredictionBatch: probs rows do not match labels");
  }
  const std::size_t k = batch.num_classes();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch.true_idx[i] >= k) {
      throw ValidationError("PredictionBatch: label " + std::to_string(batch.true_idx[i]) +
                            " out of range in row " + std::to_string(i));
    }
    double sum = 0.0;
    for (double p : batch.probs.row(i)) {
      if (!(p >= 0.0 && p <= 1.0)) {
        throw ValidationError("PredictionBatch: probability outside [0,1] in row " + std::to_string(i));
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > kRowSumTolerance) {
      throw ValidationError("PredictionBatch: row " + std::to_string(i) + " sums to " +
                            format_double(sum));
    }
  }
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp(logits[k] - m);
    sum += out[k];
  }
  for (double& v : out) v /= sum;
  return out;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto p = softmax(logits.row(i));
    std::copy(p.begin(), p.end(), out.row(i).begin());
  }
  return out;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < values.size(); ++k) {
    if (values[k] > values[best]) best = k;
  }
  return best;
}

nlohmann::ordered_json to_json(const MetricReport& report) {
  nlohmann::ordered_json j;
  j["accuracy"] = report.accuracy;
  j["macro_f1"] = report.macro_f1;
  j["eer"] = report.eer ? nlohmann::ordered_json(*report.eer) : nlohmann::ordered_json(nullptr);
  j["nll"] = report.nll;
  j["ece"] = report.ece;
  j["frechet"] =
      report.frechet ? nlohmann::ordered_json(*report.frechet) : nlohmann::ordered_json(nullptr);
  return j;
}

MetricReport report_from_json(const nlohmann::json& j) {
  MetricReport r;
  r.accuracy = j.at("accuracy").get<double>();
  r.macro_f1 = j.at("macro_f1").get<double>();
  if (!j.at("eer").is_null()) r.eer = j.at("eer").get<double>();
  r.nll = j.at("nll").get<double>();
  r.ece = j.at("ece").get<double>();
  if (!j.at("frechet").is_null()) r.frechet = j.at("frechet").get<double>();
  return r;
}

std::string to_csv(const MetricReport& report) {
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  return "accuracy,macro_f1,eer,nll,ece,frechet\n" + format_double(report.accuracy) + "," +
         format_double(report.macro_f1) + "," + opt(report.eer) + "," + format_double(report.nll) +
         "," + format_double(report.ece) + "," + opt(report.frechet) + "\n";
}

double accuracy(const PredictionBatch& batch) {
  validate(batch);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (argmax(batch.probs.row(i)) == batch.true_idx[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(batch.size());
}

double macro_f1(const PredictionBatch& batch) {
  validate(batch);
  const std::size_t k = batch.num_classes();
  std::vector<std::size_t> tp(k, 0), fp(k, 0), fn(k, 0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::size_t pred = argmax(batch.probs.row(i));
    const std::size_t truth = batch.true_idx[i];
    if (pred == truth) {
      ++tp[pred];
    } else {
      ++fp[pred];
      ++fn[truth];
    }
  }
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t denom = 2 * tp[c] + fp[c] + fn[c];
    if (denom == 0) continue;  // class absent from predictions and truths
    sum += 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
    ++counted;
  }
  return sum / static_cast<double>(counted);
}

double nll(const PredictionBatch& batch) {
  validate(batch);
  double sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    sum -= std::log(std::max(batch.probs(i, batch.true_idx[i]), kProbFloor));
  }
  return sum / static_cast<double>(batch.size());
}

std::size_t ece_bin(double confidence, std::size_t m_bins) {
  if (m_bins == 0) throw ValidationError("ece: m_bins must be at least 1");
  if (confidence <= 0.0) return 0;
  const double m = static_cast<double>(m_bins);
  auto edge = [m](std::size_t b) { return static_cast<double>(b) / m; };
  double guess = std::ceil(confidence * m) - 1.0;
  std::size_t b = guess <= 0.0 ? 0 : std::min(static_cast<std::size_t>(guess), m_bins - 1);
  // Bin b covers (edge(b), edge(b+1)]; fix up rounding in the guess.
  while (b > 0 && confidence <= edge(b)) --b;
  while (b + 1 < m_bins && confidence > edge(b + 1)) ++b;
  return b;
}

double ece(const PredictionBatch& batch, const EceConfig& cfg) {
  validate(batch);
  if (cfg.m_bins == 0) throw ValidationError("ece: m_bins must be at least 1");
  std::vector<std::size_t> count(cfg.m_bins, 0);
  std::vector<double> conf_sum(cfg.m_bins, 0.0);
  std::vector<double> correct_sum(cfg.m_bins, 0.0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto row = batch.probs.row(i);
    const std::size_t pred = argmax(row);
    const double conf = row[pred];
    const std::size_t b = ece_bin(conf, cfg.m_bins);
    ++count[b];
    conf_sum[b] += conf;
    if (pred == batch.true_idx[i]) correct_sum[b] += 1.0;
  }
  const double n = static_cast<double>(batch.size());
  double total = 0.0;
  for (std::size_t b = 0; b < cfg.m_bins; ++b) {
    if (count[b] == 0) continue;
    const double nb = static_cast<double>(count[b]);
    total += (nb / n) * std::abs(correct_sum[b] / nb - conf_sum[b] / nb);
  }
  return total;
}

EerPoint eer_operating_point(std::span<const double> scores, const std::vector<bool>& is_target) {
  if (scores.size() != is_target.size()) throw ShapeError("eer: scores and labels differ in length");
  const std::size_t n_target =
      static_cast<std::size_t>(std::count(is_target.begin(), is_target.end(), true));
  const std::size_t n_nontarget = is_target.size() - n_target;
  if (n_target == 0 || n_nontarget == 0) {
    throw DegenerateInputError("eer: need at least one target and one non-target score");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw ValidationError("eer: non-finite score");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&scores](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Distinct score levels with their target / non-target counts.
  std::vector<double> level;
  std::vector<std::size_t> targets_at;
  std::vector<std::size_t> nontargets_at;
  for (std::size_t idx : order) {
    if (level.empty() || scores[idx] != level.back()) {
      level.push_back(scores[idx]);
      targets_at.push_back(0);
      nontargets_at.push_back(0);
    }
    if (is_target[idx]) {
      ++targets_at.back();
    } else {
      ++nontargets_at.back();
    }
  }

  // Operating point j rejects every level below index j. Point 0 accepts
  // everything; point M rejects everything.
  const std::size_t m = level.size();
  const double nt = static_cast<double>(n_target);
  const double nn = static_cast<double>(n_nontarget);
  auto threshold_for = [&](std::size_t j) {
    if (j == 0) return level[0];
    if (j == m) return std::nextafter(level[m - 1], std::numeric_limits<double>::infinity());
    return 0.5 * (level[j - 1] + level[j]);
  };

  std::size_t rejected_targets = 0;
  std::size_t rejected_nontargets = 0;
  double prev_frr = 0.0;
  double prev_far = 1.0;
  for (std::size_t j = 1; j <= m; ++j) {
    rejected_targets += targets_at[j - 1];
    rejected_nontargets += nontargets_at[j - 1];
    const double frr = static_cast<double>(rejected_targets) / nt;
    const double far = static_cast<double>(n_nontarget - rejected_nontargets) / nn;
    if (frr == far) return {frr, threshold_for(j)};
    if (frr > far) {
      const double gap_before = prev_far - prev_frr;
      const double gap_after = far - frr;
      const double t = gap_before / (gap_before - gap_after);
      return {prev_frr + t * (frr - prev_frr), level[j - 1]};
    }
    prev_frr = frr;
    prev_far = far;
  }
  // Unreachable: the last point has FRR = 1 >= FAR = 0.
  return {1.0, threshold_for(m)};
}

double eer(std::span<const double> scores, const std::vector<bool>& is_target) {
  return eer_operating_point(scores, is_target).eer;
}

double frechet_distance(const MeanCov& a, const MeanCov& b) {
  const std::size_t d = a.mean.size();
  if (b.mean.size() != d || a.cov.rows() != d || a.cov.cols() != d || b.cov.rows() != d ||
      b.cov.cols() != d) {
    throw ShapeError("frechet_distance: dimension mismatch");
  }
  double mean_term = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double diff = a.mean[j] - b.mean[j];
    mean_term += diff * diff;
  }
  const Matrix root_a = psd_sqrt(a.cov);
  psd_sqrt(b.cov);  // rejects a non-PSD second covariance
  Matrix inner = matmul(matmul(root_a, b.cov), root_a);
  symmetrize(inner);
  // Tr sqrt(inner) from its spectrum. Round-off leaves the null space of a
  // rank-deficient product with eigenvalues near eps * lambda_max whose square
  // roots would otherwise inflate the trace, so those are treated as zero.
  const SymEig eig = sym_eig(inner);
  double lambda_max = 0.0;
  for (double v : eig.values) lambda_max = std::max(lambda_max, v);
  const double cutoff = static_cast<double>(d) * std::numeric_limits<double>::epsilon() * lambda_max;
  double cross = 0.0;
  for (double v : eig.values) {
    if (v > cutoff) cross += std::sqrt(v);
  }
  const double trace_sum = trace(a.cov) + trace(b.cov);
  const double distance = mean_term + trace_sum - 2.0 * cross;
  if (distance < 0.0) {
    if (distance < -kFrechetNegativeTolerance * std::max(1.0, trace_sum + mean_term)) {
      throw NumericalError("frechet_distance: negative result " + format_double(distance));
    }
    return 0.0;
  }
  return distance;
}

double centroid_distance_ratio(const Matrix& embeddings, std::span<const std::size_t> labels) {
  if (embeddings.rows() != labels.size()) throw ShapeError("centroid_distance_ratio: label count");
  const std::size_t k = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  const std::size_t d = embeddings.cols();
  Matrix centroid(k, d);
  std::vector<std::size_t> count(k, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ++count[labels[i]];
    for (std::size_t j = 0; j < d; ++j) centroid(labels[i], j) += embeddings(i, j);
  }
  std::vector<std::size_t> present;
  for (std::size_t c = 0; c < k; ++c) {
    if (count[c] == 0) continue;
    present.push_back(c);
    for (std::size_t j = 0; j < d; ++j) centroid(c, j) /= static_cast<double>(count[c]);
  }
  if (present.size() < 2) throw DegenerateInputError("centroid_distance_ratio: need two classes");

  auto distance = [d](std::span<const double> x, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += (x[j] - y[j]) * (x[j] - y[j]);
    return std::sqrt(s);
  };
  double inter = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < present.size(); ++a) {
    for (std::size_t b = a + 1; b < present.size(); ++b) {
      inter += distance(centroid.row(present[a]), centroid.row(present[b]));
      ++pairs;
    }
  }
  inter /= static_cast<double>(pairs);
  double intra = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    intra += distance(embeddings.row(i), centroid.row(labels[i]));
  }
  intra /= static_cast<double>(labels.size());
  if (intra == 0.0) return std::numeric_limits<double>::infinity();
  return inter / intra;
}

}  // namespace srctrace
