// Copyright 2026 The cxrgaze Authors
// SPDX-License-Identifier: Apache-2.0

// Runs the comparison grid on one manifest and test split:
//
//   DNet201-CL   S1a -> S1b, backbone classifier
//   DNet201      S1b from scratch, backbone classifier
//   full         S1a -> S1b -> S2 -> S3 (reuses the DNet201-CL backbone)
//   Res_SE-UNet  S2 alone, backbone input zeroed
//   UNet_S       S2 alone with a plain UNet encoder, backbone input zeroed
//
// The full model is t-tested against DNet201 / DNet201-CL on the true-class
// probability and against the two saliency-only models on kl, pcc and hs.

#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cxrgaze/config.hpp"
#include "cxrgaze/evaluation.hpp"

namespace cxrgaze {

inline const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> names = {"DNet201-CL", "DNet201", "full", "Res_SE-UNet",
                                                 "UNet_S"};
  return names;
}

struct AblationOptions {
  ModelConfig model;
  // Settings per stage; the stage field of each entry is overwritten.
  std::map<Stage, StageConfig> stages;
  std::set<std::string> skip;
  // When set, checkpoints, logs and reports land here.
  std::optional<std::filesystem::path> work_dir;
  Split eval_split = Split::test;
  int eval_batch_size = 8;
};

struct AblationResult {
  std::map<std::string, EvalReport> reports;
  std::map<std::string, Checkpoint> checkpoints;  // keyed "<variant>/<stage>"
  std::string table;
};

// Default per-stage settings derived from one base StageConfig.
AblationOptions default_ablation_options(const ModelConfig& model, const StageConfig& base);

AblationResult run_ablation(const std::vector<ImageRecord>& manifest, const AblationOptions& options);

}  // namespace cxrgaze
