// Copyright 2026 The cxrgaze Authors
// SPDX-License-Identifier: Apache-2.0

// Flat key-value configuration shared by the trainer and the CLI.
//
//   # comment
//   epochs = 50
//   lr = 1e-4
//
// Unknown keys are rejected so that typos fail loudly.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cxrgaze/model_config.hpp"

namespace cxrgaze {

enum class Stage { S1a, S1b, S2, S3 };

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view text);

struct StageConfig {
  Stage stage = Stage::S1a;
  int epochs = 50;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 8;
  int patience = 10;  // 0 disables early stopping
  double min_delta = 1e-6;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
  double triplet_margin = 0.2;
  bool finetune_all = true;   // S1b: train every backbone layer, not only the head
  bool from_scratch = false;  // S1b without contrastive pretraining (DNet201 ablation)
  bool reproducible = true;   // single-threaded kernels, seeded batch order
};

struct KeySpec {
  std::string_view name;
  std::string_view section;  // "model" or "train"
  std::string_view help;
};

const std::vector<KeySpec>& config_keys();

// Applies one setting. Throws ConfigError naming the key on unknown keys or bad values.
void apply_setting(ModelConfig& model, StageConfig& stage, std::string_view key,
                   std::string_view value);

// Parses "key = value" lines; ParseError (with line number) on malformed lines.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text);

void load_config_file(const std::filesystem::path& path, ModelConfig& model, StageConfig& stage);

std::string stage_config_text(const StageConfig& stage);
std::string config_keys_help();

}  // namespace cxrgaze
