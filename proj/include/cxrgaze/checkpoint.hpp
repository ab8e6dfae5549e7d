// Copyright 2026 The cxrgaze Authors
// SPDX-License-Identifier: Apache-2.0

// Named-tensor checkpoint archive.
//
// Layout (little-endian):
//   "CXRGCKPT" u32 version
//   u64 metadata length, metadata JSON
//   u64 tensor count, then per tensor:
//     u32 name length, name, u8 dtype (0 = f32, 1 = i64), u32 rank, i64 dims[rank],
//     u64 byte count, raw bytes
//   32-byte SHA-256 of everything above
//
// Files are written to "<path>.tmp" and renamed into place.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <torch/torch.h>

#include "cxrgaze/config.hpp"
#include "cxrgaze/model.hpp"

namespace cxrgaze {

struct CheckpointMeta {
  Stage stage = Stage::S1a;
  int epoch = 0;  // 1-based epoch the weights come from
  double best_val_metric = 0;
  std::string monitored = "val_loss";  // or "train_loss" when no validation split
  std::string config_digest;
  std::string model_config;  // ModelConfig::to_text()
  std::string stage_config;  // stage_config_text()
  std::uint64_t seed = 0;
  std::string rng_state;
  std::string lineage;  // stages that produced these weights, e.g. "S1a>S1b>S2"
};

struct Checkpoint {
  CheckpointMeta meta;
  std::map<std::string, torch::Tensor> state;
};

Checkpoint make_checkpoint(const CxrGazeModel& model, CheckpointMeta meta);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
// DependencyError if the file is absent; IntegrityError if truncated or corrupt.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Builds a model from the embedded config and loads every tensor.
CxrGazeModel model_from_checkpoint(const Checkpoint& checkpoint);

// Copies tensors whose top-level namespace is in `namespaces`.
void load_namespaces(CxrGazeModel& model, const Checkpoint& checkpoint,
                     const std::vector<std::string>& namespaces);

}  // namespace cxrgaze
