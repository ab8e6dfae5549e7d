// Copyright 2026 The cxrgaze Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>
#include <vector>

namespace cxrgaze {

struct BackboneConfig {
  int growth_rate = 32;
  std::vector<int> block_config = {6, 12, 48, 32};  // DenseNet-201
  int init_features = 64;
  int bn_size = 4;
  int embedding_dim = 128;
  // Truncate after the third transition (stride 32). When false the
  // truncated features stop after the third dense block (stride 16).
  bool include_transition3 = true;

  int feature_channels() const;  // 896 for DenseNet-201 with transition 3
  int final_channels() const;    // 1920 for DenseNet-201
  int feature_stride() const { return include_transition3 ? 32 : 16; }
};

struct SaliencyNetConfig {
  std::array<int, 5> channels = {32, 64, 128, 256, 512};
  int fused_channels = 1024;
  int se_reduction = 16;
  bool use_res_se = true;           // false: plain double-conv UNet encoder (UNet_S)
  bool use_backbone_fusion = true;  // false: backbone input replaced by zeros
  int norm_groups = 8;
};

struct FusionConfig {
  int hidden_dim = 256;
  double dropout = 0.3;
};

struct ModelConfig {
  int image_height = 640;
  int image_width = 512;
  BackboneConfig backbone;
  SaliencyNetConfig salnet;
  FusionConfig fusion;

  // Stable "key=value" rendering; checkpoints embed it.
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);

  std::string digest() const;
  // Digest over the image frame + backbone keys only.
  std::string backbone_digest() const;
  // Digest over the image frame + backbone + saliency network keys.
  std::string salnet_digest() const;

  void validate() const;  // ConfigError on inconsistent values
};

}  // namespace cxrgaze
