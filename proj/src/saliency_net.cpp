// Copyright 2026 The cxrgaze Authors
// SPDX-License-Identifier: Apache-2.0

#include "cxrgaze/saliency_net.hpp"

#include <sstream>

#include "cxrgaze/backbone.hpp"
#include "cxrgaze/errors.hpp"

namespace F = torch::nn::functional;
namespace nn = torch::nn;

namespace cxrgaze {
namespace {

nn::Conv2d conv3x3(int in, int out, int stride = 1) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

nn::Conv2d conv1x1(int in, int out) { return nn::Conv2d(nn::Conv2dOptions(in, out, 1)); }

}  // namespace

SqueezeExcitationImpl::SqueezeExcitationImpl(int channels, int reduction) {
  if (reduction < 1 || channels % reduction != 0)
    throw ConfigError("squeeze-excitation: " + std::to_string(channels) +
                      " channels not divisible by reduction " + std::to_string(reduction));
  reduce = register_module("reduce", nn::Linear(channels, channels / reduction));
  expand = register_module("expand", nn::Linear(channels / reduction, channels));
}

torch::Tensor SqueezeExcitationImpl::squeeze(const torch::Tensor& x) { return x.mean({2, 3}); }

torch::Tensor SqueezeExcitationImpl::gates(const torch::Tensor& x) {
  return torch::sigmoid(expand(torch::relu(reduce(squeeze(x)))));
}

torch::Tensor SqueezeExcitationImpl::forward(const torch::Tensor& x) {
  return x * gates(x).unsqueeze(-1).unsqueeze(-1);
}

ResSEBlockImpl::ResSEBlockImpl(int channels, int reduction, int groups) {
  norm1 = register_module("norm1", nn::GroupNorm(groups, channels));
  conv1 = register_module("conv1", conv3x3(channels, channels));
  norm2 = register_module("norm2", nn::GroupNorm(groups, channels));
  conv2 = register_module("conv2", conv3x3(channels, channels));
  se = register_module("se", SqueezeExcitation(channels, reduction));
}

torch::Tensor ResSEBlockImpl::forward(const torch::Tensor& x) {
  auto r = conv1(torch::relu(norm1(x)));
  r = conv2(torch::relu(norm2(r)));
  return x + se(r);
}

DoubleConvImpl::DoubleConvImpl(int in_channels, int out_channels, int groups) {
  body = register_module("body", nn::Sequential(conv3x3(in_channels, out_channels),
                                                nn::GroupNorm(groups, out_channels), nn::ReLU(),
                                                conv3x3(out_channels, out_channels),
                                                nn::GroupNorm(groups, out_channels), nn::ReLU()));
}

torch::Tensor DoubleConvImpl::forward(const torch::Tensor& x) { return body->forward(x); }

SaliencyNetImpl::SaliencyNetImpl(const SaliencyNetConfig& config, int backbone_channels)
    : config_(config), backbone_channels_(backbone_channels) {
  const auto& c = config.channels;
  const int g = config.norm_groups;
  auto block = [&](int in, int out) -> nn::AnyModule {
    if (config.use_res_se) return nn::AnyModule(ResSEBlock(out, config.se_reduction, g));
    return nn::AnyModule(DoubleConv(in, out, g));
  };

  if (config.use_res_se) stem = register_module("stem", conv3x3(1, c[0]));
  enc_[0] = block(1, c[0]);
  register_module("enc0", enc_[0].ptr());
  for (int k = 0; k < 5; ++k) {
    const int in = c[k];
    const int out = k < 4 ? c[k + 1] : c[4];
    if (config.use_res_se) down_[k] = register_module("down" + std::to_string(k + 1), conv3x3(in, out, 2));
    if (k < 4) {
      enc_[k + 1] = block(in, out);
      register_module("enc" + std::to_string(k + 1), enc_[k + 1].ptr());
    } else {
      bottleneck_ = block(in, out);
      register_module("bottleneck", bottleneck_.ptr());
    }
  }

  fuse = register_module("fuse", conv1x1(c[4] + backbone_channels, config.fused_channels));
  fuse_norm = register_module("fuse_norm", nn::GroupNorm(g, config.fused_channels));

  for (int i = 4; i >= 0; --i) {
    const int in = i == 4 ? config.fused_channels : c[i + 1];
    up_[i] = register_module("up" + std::to_string(i), conv3x3(in, c[i]));
    up_norm_[i] = register_module("up_norm" + std::to_string(i), nn::GroupNorm(g, c[i]));
    dec_[i] = register_module("dec" + std::to_string(i), DoubleConv(2 * c[i], c[i], g));
  }
  head_ = register_module("head", conv1x1(c[0], 1));
}

torch::Tensor SaliencyNetImpl::encode_level(int level, const torch::Tensor& x) {
  // level 1..4 are encoder levels, 5 is the bottleneck.
  auto h = config_.use_res_se ? down_[level - 1](x)
                              : F::max_pool2d(x, F::MaxPool2dFuncOptions(2).stride(2));
  return level < 5 ? enc_[level].forward(h) : bottleneck_.forward(h);
}

SaliencyOutput SaliencyNetImpl::forward(const torch::Tensor& image,
                                        const torch::Tensor& backbone_features) {
  check_image_batch(image);
  std::array<torch::Tensor, 5> skips;
  skips[0] = enc_[0].forward(config_.use_res_se ? stem(image) : image);
  for (int i = 1; i < 5; ++i) skips[i] = encode_level(i, skips[i - 1]);
  auto bottom = encode_level(5, skips[4]);

  if (backbone_features.dim() != 4 || backbone_features.size(0) != image.size(0) ||
      backbone_features.size(1) != backbone_channels_ ||
      backbone_features.size(2) != bottom.size(2) || backbone_features.size(3) != bottom.size(3)) {
    std::ostringstream msg;
    msg << "backbone features " << backbone_features.sizes() << " do not match the UNet bottleneck ["
        << bottom.size(0) << ", " << backbone_channels_ << ", " << bottom.size(2) << ", "
        << bottom.size(3) << "]";
    throw ShapeError(msg.str());
  }

  auto h = torch::relu(fuse_norm(fuse(torch::cat({bottom, backbone_features}, 1))));
  for (int i = 4; i >= 0; --i) {
    h = F::interpolate(h, F::InterpolateFuncOptions()
                              .scale_factor(std::vector<double>{2.0, 2.0})
                              .mode(torch::kNearest));
    h = torch::relu(up_norm_[i](up_[i](h)));
    h = dec_[i](torch::cat({h, skips[i]}, 1));
  }

  SaliencyOutput out;
  out.decoder_features = h;
  out.logits = head_(h).squeeze(1);
  const auto n = out.logits.size(0);
  out.probabilities =
      torch::softmax(out.logits.reshape({n, -1}), 1).reshape(out.logits.sizes());
  return out;
}

}  // namespace cxrgaze
