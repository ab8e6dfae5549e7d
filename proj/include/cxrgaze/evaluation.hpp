// Copyright 2026 The cxrgaze Authors
// SPDX-License-Identifier: Apache-2.0

// Model evaluation on a record set: classification AUC/accuracy, per-image
// saliency metrics, paired significance against a baseline, and GradCAM.

#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "cxrgaze/checkpoint.hpp"
#include "cxrgaze/data_pipeline.hpp"
#include "cxrgaze/metrics.hpp"
#include "cxrgaze/model.hpp"
#include "cxrgaze/trainer.hpp"

namespace cxrgaze {

// Which parts of a trained model can be scored.
enum class ClassifierHead { none, backbone, fusion };

struct EvalCapabilities {
  ClassifierHead classifier = ClassifierHead::none;
  bool saliency = false;
};

// Derived from the checkpoint stage and lineage: S1b gives the backbone head,
// S2 adds saliency (and keeps the backbone head if trained after S1b), S3
// switches classification to the fusion head.
EvalCapabilities capabilities_of(const CheckpointMeta& meta);

struct ImageEval {
  std::string image_path;
  int true_label = 0;
  std::optional<int> pred_label;
  std::optional<metrics::ClassScores> probabilities;
  std::optional<metrics::SaliencyScores> saliency;
};

struct SignificanceEntry {
  std::string metric;
  std::string baseline;
  metrics::TTestResult test;
  std::size_t pairs = 0;
};

struct EvalReport {
  std::string name;
  std::optional<metrics::AucReport> auc;
  std::optional<double> accuracy;
  std::vector<ImageEval> images;
  std::map<std::string, metrics::MeanStd> aggregates;  // kl, pcc, hs
  std::vector<SignificanceEntry> significance;
};

EvalReport evaluate(CxrGazeModel& model, const EvalCapabilities& caps, const TensorDataset& data,
                    const std::string& name, int batch_size = 8);

// Recomputes mean/std of kl, pcc (defined values only) and hs from report.images.
std::map<std::string, metrics::MeanStd> saliency_aggregates(const std::vector<ImageEval>& images);

// Per-image values of `metric` ("kl", "pcc", "hs", or "p_true": the probability
// assigned to the true class), keyed by image path; missing values are skipped.
std::map<std::string, double> per_image_metric(const EvalReport& report, const std::string& metric);

// Paired two-sided t-tests of report vs baseline over images present in both.
void add_significance(EvalReport& report, const EvalReport& baseline);

void write_report_json(const std::filesystem::path& path, const EvalReport& report);
EvalReport read_report_json(const std::filesystem::path& path);
void write_per_image_csv(const std::filesystem::path& path, const EvalReport& report);
std::string report_table(const std::vector<EvalReport>& reports);

// GradCAM over the final backbone feature map. image is [H,W] in the model frame;
// class_index defaults to the predicted class. Returns a [H,W] map in [0,1].
torch::Tensor gradcam(CxrGazeModel& model, const torch::Tensor& image,
                      std::optional<int> class_index = std::nullopt);

}  // namespace cxrgaze
