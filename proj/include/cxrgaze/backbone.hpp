// Copyright 2026 The cxrgaze Authors
// SPDX-License-Identifier: Apache-2.0

// DenseNet-201 image encoder with a single-channel stem.
//
// Three uses across the training stages:
//   features()     truncated after transition 3: 896 x H/32 x W/32
//   final()        all four dense blocks + norm5 + ReLU: 1920 x H/32 x W/32
// The embedding and classification heads live in CxrGazeModel.

#pragma once

#include <torch/torch.h>

#include "cxrgaze/model_config.hpp"

namespace cxrgaze {

class DenseLayerImpl : public torch::nn::Module {
 public:
  DenseLayerImpl(int in_channels, int growth_rate, int bn_size);
  torch::Tensor forward(const std::vector<torch::Tensor>& inputs);

 private:
  torch::nn::BatchNorm2d norm1{nullptr}, norm2{nullptr};
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
};
TORCH_MODULE(DenseLayer);

class DenseBlockImpl : public torch::nn::Module {
 public:
  DenseBlockImpl(int num_layers, int in_channels, int growth_rate, int bn_size);
  torch::Tensor forward(torch::Tensor x);

 private:
  std::vector<DenseLayer> layers_;
};
TORCH_MODULE(DenseBlock);

// BN-ReLU-conv1x1 (halving channels) then 2x2 average pooling.
class TransitionImpl : public torch::nn::Module {
 public:
  TransitionImpl(int in_channels, int out_channels);
  torch::Tensor forward(torch::Tensor x);

 private:
  torch::nn::BatchNorm2d norm{nullptr};
  torch::nn::Conv2d conv{nullptr};
};
TORCH_MODULE(Transition);

class DenseNetBackboneImpl : public torch::nn::Module {
 public:
  explicit DenseNetBackboneImpl(const BackboneConfig& config);

  // [N,1,H,W] -> truncated encoder output. H and W must be multiples of 32.
  torch::Tensor features(const torch::Tensor& x);
  // Continues from features() through the last dense block.
  torch::Tensor final_from_features(const torch::Tensor& truncated);
  torch::Tensor final(const torch::Tensor& x) { return final_from_features(features(x)); }

  const BackboneConfig& config() const { return config_; }

 private:
  BackboneConfig config_;
  torch::nn::Conv2d conv0{nullptr};
  torch::nn::BatchNorm2d norm0{nullptr};
  std::vector<DenseBlock> blocks_;
  std::vector<Transition> transitions_;
  torch::nn::BatchNorm2d norm5{nullptr};
};
TORCH_MODULE(DenseNetBackbone);

void check_image_batch(const torch::Tensor& x, int multiple = 32);

}  // namespace cxrgaze
