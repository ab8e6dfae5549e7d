// Copyright 2026 The cxrgaze Authors
// SPDX-License-Identifier: Apache-2.0

#include "cxrgaze/backbone.hpp"

#include <sstream>

#include "cxrgaze/errors.hpp"

namespace F = torch::nn::functional;

namespace cxrgaze {

void check_image_batch(const torch::Tensor& x, int multiple) {
  if (x.dim() != 4 || x.size(1) != 1 || x.size(2) % multiple != 0 || x.size(3) % multiple != 0) {
    std::ostringstream msg;
    msg << "expected an image batch [N,1,H,W] with H,W multiples of " << multiple << ", got "
        << x.sizes();
    throw ShapeError(msg.str());
  }
}

DenseLayerImpl::DenseLayerImpl(int in_channels, int growth_rate, int bn_size) {
  norm1 = register_module("norm1", torch::nn::BatchNorm2d(in_channels));
  conv1 = register_module(
      "conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, bn_size * growth_rate, 1)
                                     .bias(false)));
  norm2 = register_module("norm2", torch::nn::BatchNorm2d(bn_size * growth_rate));
  conv2 = register_module(
      "conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(bn_size * growth_rate, growth_rate, 3)
                                     .padding(1)
                                     .bias(false)));
}

torch::Tensor DenseLayerImpl::forward(const std::vector<torch::Tensor>& inputs) {
  auto x = torch::cat(inputs, 1);
  x = conv1(torch::relu(norm1(x)));
  return conv2(torch::relu(norm2(x)));
}

DenseBlockImpl::DenseBlockImpl(int num_layers, int in_channels, int growth_rate, int bn_size) {
  for (int i = 0; i < num_layers; ++i)
    layers_.push_back(register_module("denselayer" + std::to_string(i + 1),
                                      DenseLayer(in_channels + i * growth_rate, growth_rate,
                                                 bn_size)));
}

torch::Tensor DenseBlockImpl::forward(torch::Tensor x) {
  std::vector<torch::Tensor> features{std::move(x)};
  features.reserve(layers_.size() + 1);
  for (auto& layer : layers_) features.push_back(layer(features));
  return torch::cat(features, 1);
}

TransitionImpl::TransitionImpl(int in_channels, int out_channels) {
  norm = register_module("norm", torch::nn::BatchNorm2d(in_channels));
  conv = register_module(
      "conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, out_channels, 1).bias(false)));
}

torch::Tensor TransitionImpl::forward(torch::Tensor x) {
  return F::avg_pool2d(conv(torch::relu(norm(x))), F::AvgPool2dFuncOptions(2).stride(2));
}

DenseNetBackboneImpl::DenseNetBackboneImpl(const BackboneConfig& config) : config_(config) {
  const int g = config.growth_rate;
  conv0 = register_module("conv0", torch::nn::Conv2d(torch::nn::Conv2dOptions(1, config.init_features, 7)
                                                         .stride(2)
                                                         .padding(3)
                                                         .bias(false)));
  norm0 = register_module("norm0", torch::nn::BatchNorm2d(config.init_features));

  int channels = config.init_features;
  for (std::size_t i = 0; i < config.block_config.size(); ++i) {
    const int layers = config.block_config[i];
    blocks_.push_back(register_module("denseblock" + std::to_string(i + 1),
                                      DenseBlock(layers, channels, g, config.bn_size)));
    channels += layers * g;
    if (i + 1 < config.block_config.size()) {
      transitions_.push_back(register_module("transition" + std::to_string(i + 1),
                                             Transition(channels, channels / 2)));
      channels /= 2;
    }
  }
  norm5 = register_module("norm5", torch::nn::BatchNorm2d(channels));

  for (auto& m : modules(/*include_self=*/false)) {
    if (auto* conv = m->as<torch::nn::Conv2d>()) {
      torch::nn::init::kaiming_normal_(conv->weight);
    } else if (auto* bn = m->as<torch::nn::BatchNorm2d>()) {
      torch::nn::init::ones_(bn->weight);
      torch::nn::init::zeros_(bn->bias);
    }
  }
}

torch::Tensor DenseNetBackboneImpl::features(const torch::Tensor& x) {
  check_image_batch(x);
  auto h = torch::relu(norm0(conv0(x)));
  h = F::max_pool2d(h, F::MaxPool2dFuncOptions(3).stride(2).padding(1));
  h = transitions_[0](blocks_[0](h));
  h = transitions_[1](blocks_[1](h));
  h = blocks_[2](h);
  if (config_.include_transition3) h = transitions_[2](h);
  return h;
}

torch::Tensor DenseNetBackboneImpl::final_from_features(const torch::Tensor& truncated) {
  auto h = config_.include_transition3 ? truncated : transitions_[2](truncated);
  return torch::relu(norm5(blocks_[3](h)));
}

}  // namespace cxrgaze
