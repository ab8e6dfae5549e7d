// Copyright 2026 The cxrgaze Authors
// SPDX-License-Identifier: Apache-2.0

// Res_SE-UNet: five-level UNet whose encoder blocks are pre-activation residual
// blocks with a squeeze-and-excitation gate on the residual branch. Backbone
// features are concatenated at the stride-32 bottleneck and projected by a
// 1x1 convolution before decoding. The output is a spatial softmax, so every
// predicted map is a probability distribution.

#pragma once

#include <array>

#include <torch/torch.h>

#include "cxrgaze/model_config.hpp"

namespace cxrgaze {

// Squeeze-and-excitation channel gate.
class SqueezeExcitationImpl : public torch::nn::Module {
 public:
  SqueezeExcitationImpl(int channels, int reduction);
  // Per-channel gates in (0,1), shape [N,C].
  torch::Tensor gates(const torch::Tensor& x);
  // Per-channel means, shape [N,C].
  static torch::Tensor squeeze(const torch::Tensor& x);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Linear reduce{nullptr}, expand{nullptr};
};
TORCH_MODULE(SqueezeExcitation);

class ResSEBlockImpl : public torch::nn::Module {
 public:
  ResSEBlockImpl(int channels, int reduction, int groups);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::GroupNorm norm1{nullptr}, norm2{nullptr};
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  SqueezeExcitation se{nullptr};
};
TORCH_MODULE(ResSEBlock);

// conv3x3-norm-ReLU twice; the classic UNet block.
class DoubleConvImpl : public torch::nn::Module {
 public:
  DoubleConvImpl(int in_channels, int out_channels, int groups);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential body{nullptr};
};
TORCH_MODULE(DoubleConv);

struct SaliencyOutput {
  torch::Tensor probabilities;    // [N,H,W], each map sums to 1
  torch::Tensor logits;           // [N,H,W]
  torch::Tensor decoder_features; // [N,C0,H,W] from the last upsampling level
};

class SaliencyNetImpl : public torch::nn::Module {
 public:
  SaliencyNetImpl(const SaliencyNetConfig& config, int backbone_channels);

  // image [N,1,H,W]; backbone_features [N,Cb,H/32,W/32].
  SaliencyOutput forward(const torch::Tensor& image, const torch::Tensor& backbone_features);

  const SaliencyNetConfig& config() const { return config_; }
  int backbone_channels() const { return backbone_channels_; }
  torch::nn::Conv2d& head() { return head_; }

 private:
  torch::Tensor encode_level(int level, const torch::Tensor& x);

  SaliencyNetConfig config_;
  int backbone_channels_;
  torch::nn::Conv2d stem{nullptr};
  std::array<torch::nn::Conv2d, 5> down_{nullptr, nullptr, nullptr, nullptr, nullptr};
  std::array<torch::nn::AnyModule, 5> enc_;
  torch::nn::AnyModule bottleneck_;
  torch::nn::Conv2d fuse{nullptr};
  torch::nn::GroupNorm fuse_norm{nullptr};
  std::array<torch::nn::Conv2d, 5> up_{nullptr, nullptr, nullptr, nullptr, nullptr};
  std::array<torch::nn::GroupNorm, 5> up_norm_{nullptr, nullptr, nullptr, nullptr, nullptr};
  std::array<DoubleConv, 5> dec_{nullptr, nullptr, nullptr, nullptr, nullptr};
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(SaliencyNet);

}  // namespace cxrgaze
