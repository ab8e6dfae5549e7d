// Copyright 2026 The cxrgaze Authors
// SPDX-License-Identifier: Apache-2.0

// Classification and saliency metrics plus the paired t-test used to compare
// per-image saliency scores between two models.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "cxrgaze/errors.hpp"

namespace cxrgaze::metrics {

inline constexpr double kKlEpsilon = 1e-8;

using ClassScores = std::array<double, 3>;

// One-vs-rest ROC area from the Mann-Whitney U statistic, ties counted 0.5.
// Returns nullopt when either side of the split is empty.
inline std::optional<double> binary_auc(std::span<const double> scores,
                                        std::span<const int> labels, int positive_class) {
  if (scores.size() != labels.size())
    throw ValidationError("auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Average 1-based ranks over tie groups, summed over positives.
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == positive_class) {
        rank_sum += avg_rank;
        ++n_pos;
      }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double np = static_cast<double>(n_pos);
  const double u = rank_sum - np * (np + 1) / 2;
  return u / (np * static_cast<double>(n_neg));
}

struct AucReport {
  std::array<std::optional<double>, 3> per_class;
  std::optional<double> macro;  // unweighted mean of the defined per-class values
};

inline AucReport multiclass_auc(std::span<const ClassScores> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw ValidationError("auc: scores and labels differ in length");
  if (scores.size() < 2) throw ValidationError("auc needs at least two samples");
  AucReport report;
  double sum = 0.0;
  int defined = 0;
  for (int label : labels)
    if (label < 0 || label > 2) throw ValidationError("auc: label out of range");
  std::vector<double> column(scores.size());
  for (int k = 0; k < 3; ++k) {
    for (std::size_t i = 0; i < scores.size(); ++i) column[i] = scores[i][k];
    report.per_class[k] = binary_auc(column, labels, k);
    if (report.per_class[k]) {
      sum += *report.per_class[k];
      ++defined;
    }
  }
  if (defined > 0) report.macro = sum / defined;
  return report;
}

inline double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size())
    throw ValidationError("accuracy: predictions and labels differ in length");
  if (predictions.empty()) throw ValidationError("accuracy needs at least one sample");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

// KL(target || predicted) with 0 ln 0 = 0 and epsilon inside the predicted log.
template <typename T>
double kl_divergence(std::span<const T> predicted, std::span<const T> target,
                     double epsilon = kKlEpsilon) {
  if (predicted.size() != target.size()) throw ValidationError("kl: map sizes differ");
  double kl = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double t = target[i];
    if (t < 0 || predicted[i] < 0) throw ValidationError("kl: negative map entry");
    if (t > 0) kl += t * std::log(t / (static_cast<double>(predicted[i]) + epsilon));
  }
  return kl;
}

// Pearson correlation; nullopt if either input is constant.
template <typename T>
std::optional<double> pearson(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw ValidationError("pcc: sizes differ");
  if (a.empty()) return std::nullopt;
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0 || sbb == 0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

// Histogram intersection of two normalized maps, in [0,1].
template <typename T>
double histogram_similarity(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw ValidationError("hs: sizes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s += std::min(static_cast<double>(a[i]), static_cast<double>(b[i]));
  return s;
}

struct SaliencyScores {
  double kl = 0;
  std::optional<double> pcc;
  double hs = 0;
};

template <typename T>
SaliencyScores saliency_metrics(std::span<const T> predicted, std::span<const T> target) {
  if (predicted.size() != target.size())
    throw ValidationError("saliency metrics: map shapes differ");
  return {kl_divergence(predicted, target), pearson(predicted, target),
          histogram_similarity(predicted, target)};
}

struct TTestResult {
  double t = 0;
  std::size_t dof = 0;
  double p = 1;
  bool degenerate_variance = false;
};

inline TTestResult paired_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("t-test: samples are not paired");
  if (a.size() < 2) throw ValidationError("t-test needs at least two pairs");
  const std::size_t n = a.size();
  double mean = 0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = (a[i] - b[i]) - mean;
    ss += d * d;
  }
  TTestResult r;
  r.dof = n - 1;
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd == 0) {
    if (mean == 0) return r;
    r.t = mean > 0 ? std::numeric_limits<double>::infinity()
                   : -std::numeric_limits<double>::infinity();
    r.p = 0;
    r.degenerate_variance = true;
    return r;
  }
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  const boost::math::students_t dist(static_cast<double>(r.dof));
  r.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t))));
  return r;
}

struct MeanStd {
  double mean = 0;
  double std = 0;  // sample (n-1) standard deviation; 0 for n < 2
  std::size_t n = 0;
};

inline MeanStd mean_std(std::span<const double> values) {
  MeanStd m;
  m.n = values.size();
  if (values.empty()) return m;
  for (double v : values) m.mean += v;
  m.mean /= static_cast<double>(m.n);
  if (m.n > 1) {
    double ss = 0;
    for (double v : values) ss += (v - m.mean) * (v - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(m.n - 1));
  }
  return m;
}

}  // namespace cxrgaze::metrics
