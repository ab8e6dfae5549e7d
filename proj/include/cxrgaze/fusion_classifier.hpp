// Copyright 2026 The cxrgaze Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include "cxrgaze/model_config.hpp"

namespace cxrgaze {

// Multi-scale feature-fusion classifier: pooled backbone features (stride 32)
// concatenated with pooled last-decoder-level features (full resolution).
class FusionClassifierImpl : public torch::nn::Module {
 public:
  FusionClassifierImpl(const FusionConfig& config, int backbone_channels, int decoder_channels);

  torch::Tensor forward(const torch::Tensor& backbone_features,
                        const torch::Tensor& decoder_features);
  // Inputs already global-average-pooled: [N,Cb] and [N,Cd].
  torch::Tensor forward_pooled(const torch::Tensor& backbone_pooled,
                               const torch::Tensor& decoder_pooled);

  torch::nn::Linear fc1{nullptr}, fc2{nullptr};

 private:
  torch::nn::Dropout dropout{nullptr};
  int backbone_channels_;
  int decoder_channels_;
};
TORCH_MODULE(FusionClassifier);

}  // namespace cxrgaze
