// Copyright 2026 The cxrgaze Authors
// SPDX-License-Identifier: Apache-2.0

// Stage-wise cooperative training. Each stage trains one namespace set and
// leaves the rest byte-identical:
//
//   S1a  backbone + embed_head   triplet loss
//   S1b  backbone + cls_head     cross entropy   (cls_head only if !finetune_all)
//   S2   salnet                  KL(target || predicted)
//   S3   fusion_head             cross entropy
//
// Upstream checkpoints: S1b <- S1a (unless from_scratch), S2 <- S1b (unless
// backbone fusion is off), S3 <- S2 whose lineage contains S1b.

#pragma once

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "cxrgaze/checkpoint.hpp"
#include "cxrgaze/config.hpp"
#include "cxrgaze/data_pipeline.hpp"
#include "cxrgaze/model.hpp"

namespace cxrgaze {

// Records decoded into dense tensors at the model resolution.
struct TensorDataset {
  std::vector<ImageRecord> records;
  torch::Tensor images;    // [N,1,H,W] float32 in [0,1]
  torch::Tensor saliency;  // [N,H,W] distributions; undefined unless every record has one
  torch::Tensor labels;    // [N] int64

  std::int64_t size() const { return static_cast<std::int64_t>(records.size()); }
  bool empty() const { return records.empty(); }
  TensorDataset subset(const std::vector<std::int64_t>& indices) const;
};

TensorDataset load_tensor_dataset(const std::vector<ImageRecord>& records, int height, int width);

struct StageData {
  TensorDataset train;
  TensorDataset val;  // may be empty
};

// Train records plus validation: the manifest's val split when present, otherwise a
// class-stratified `val_fraction` carve of train (seeded).
StageData prepare_stage_data(const std::vector<ImageRecord>& manifest, const StageConfig& stage,
                             const ModelConfig& model);

struct EpochLog {
  int epoch = 0;  // 1-based
  double train_loss = 0;
  std::optional<double> val_loss;
  double lr = 0;
  double seconds = 0;
};

void write_training_log(const std::filesystem::path& path, const std::vector<EpochLog>& log);

struct EarlyStopDecision {
  bool stop = false;
  std::size_t best = 0;  // index into history
};

// history nonempty; patience 0 never stops. An epoch counts as an improvement when
// it beats the last significant best by at least min_delta.
EarlyStopDecision early_stopping_update(const std::vector<double>& history, int patience,
                                        double min_delta = 1e-6);

std::set<std::string> trainable_namespaces(const StageConfig& stage);

struct StageHooks {
  // Called after every epoch; returning true ends training.
  std::function<bool(const EpochLog&, CxrGazeModel&)> on_epoch_end;
  // Receives the per-batch loss tensor value (epoch, batch index, loss).
  std::function<void(int, int, double)> on_batch;
};

struct StageResult {
  CxrGazeModel model{nullptr};  // holds the best-epoch weights
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
  std::size_t best_index = 0;
  bool stopped_early = false;
};

// Checks the stage dependency contract without training. DependencyError when a
// required upstream checkpoint is absent; ValidationError on a stage or
// architecture mismatch.
void check_upstream(const StageConfig& stage, const ModelConfig& model,
                    const std::optional<Checkpoint>& init);

StageResult run_stage(const StageConfig& stage, const ModelConfig& model, const StageData& data,
                      const std::optional<Checkpoint>& init, const StageHooks& hooks = {});

// Class probabilities [N,3] from the backbone head, batched, eval mode.
torch::Tensor predict_backbone_probabilities(CxrGazeModel& model, const torch::Tensor& images,
                                             int batch_size = 8);
// Class probabilities [N,3] from the fusion head, plus saliency maps [N,H,W].
struct FullPrediction {
  torch::Tensor probabilities;
  torch::Tensor saliency;
};
FullPrediction predict_full(CxrGazeModel& model, const torch::Tensor& images, int batch_size = 8);
// Saliency maps [N,H,W] only.
torch::Tensor predict_saliency(CxrGazeModel& model, const torch::Tensor& images,
                               int batch_size = 8);

}  // namespace cxrgaze
