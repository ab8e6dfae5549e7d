// Copyright 2026 The cxrgaze Authors
// SPDX-License-Identifier: Apache-2.0

#include "cxrgaze/model.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "cxrgaze/digest.hpp"
#include "cxrgaze/errors.hpp"

namespace cxrgaze {

FusionClassifierImpl::FusionClassifierImpl(const FusionConfig& config, int backbone_channels,
                                           int decoder_channels)
    : backbone_channels_(backbone_channels), decoder_channels_(decoder_channels) {
  fc1 = register_module("fc1", torch::nn::Linear(backbone_channels + decoder_channels,
                                                 config.hidden_dim));
  dropout = register_module("dropout", torch::nn::Dropout(config.dropout));
  fc2 = register_module("fc2", torch::nn::Linear(config.hidden_dim, 3));
}

torch::Tensor FusionClassifierImpl::forward(const torch::Tensor& backbone_features,
                                            const torch::Tensor& decoder_features) {
  if (backbone_features.dim() != 4 || decoder_features.dim() != 4 ||
      backbone_features.size(0) != decoder_features.size(0)) {
    std::ostringstream msg;
    msg << "fusion classifier: backbone " << backbone_features.sizes() << " and decoder "
        << decoder_features.sizes() << " features do not form one batch";
    throw ShapeError(msg.str());
  }
  return forward_pooled(backbone_features.mean({2, 3}), decoder_features.mean({2, 3}));
}

torch::Tensor FusionClassifierImpl::forward_pooled(const torch::Tensor& backbone_pooled,
                                                   const torch::Tensor& decoder_pooled) {
  if (backbone_pooled.size(0) != decoder_pooled.size(0) ||
      backbone_pooled.size(1) != backbone_channels_ ||
      decoder_pooled.size(1) != decoder_channels_)
    throw ShapeError("fusion classifier: pooled feature widths or batch sizes mismatch");
  auto h = torch::relu(fc1(torch::cat({backbone_pooled, decoder_pooled}, 1)));
  return fc2(dropout(h));
}

CxrGazeModelImpl::CxrGazeModelImpl(const ModelConfig& config) : config_(config) {
  config_.validate();
  const auto& b = config_.backbone;
  backbone = register_module("backbone", DenseNetBackbone(b));
  embed_head = register_module("embed_head", torch::nn::Linear(b.feature_channels(), b.embedding_dim));
  cls_head = register_module("cls_head", torch::nn::Linear(b.final_channels(), 3));
  salnet = register_module("salnet", SaliencyNet(config_.salnet, b.feature_channels()));
  fusion_head = register_module(
      "fusion_head", FusionClassifier(config_.fusion, b.feature_channels(), config_.salnet.channels[0]));
}

torch::Tensor CxrGazeModelImpl::forward_features(const torch::Tensor& images) {
  return backbone->features(images);
}

torch::Tensor CxrGazeModelImpl::embedding_from_features(const torch::Tensor& features) {
  auto e = embed_head(features.mean({2, 3}));
  return e / e.norm(2, 1, true).clamp_min(1e-12);
}

torch::Tensor CxrGazeModelImpl::forward_embedding(const torch::Tensor& images) {
  return embedding_from_features(forward_features(images));
}

torch::Tensor CxrGazeModelImpl::forward_class_logits(const torch::Tensor& images) {
  return cls_head(backbone->final(images).mean({2, 3}));
}

SaliencyOutput CxrGazeModelImpl::forward_saliency(const torch::Tensor& images,
                                                  const torch::Tensor& features) {
  if (config_.salnet.use_backbone_fusion) {
    if (!features.defined()) throw ShapeError("saliency network needs backbone features");
    return salnet(images, features);
  }
  check_image_batch(images);
  const auto stride = 32;
  auto zeros = torch::zeros({images.size(0), config_.backbone.feature_channels(),
                             images.size(2) / stride, images.size(3) / stride},
                            images.options());
  return salnet(images, zeros);
}

torch::Tensor CxrGazeModelImpl::forward_fused_logits(const torch::Tensor& features,
                                                     const torch::Tensor& decoder_features) {
  return fusion_head(features, decoder_features);
}

namespace {

std::string top_namespace(const std::string& name) { return name.substr(0, name.find('.')); }

}  // namespace

void set_trainable_namespaces(CxrGazeModel& model, const std::set<std::string>& namespaces) {
  for (auto& item : model->named_parameters())
    item.value().set_requires_grad(namespaces.count(top_namespace(item.key())) > 0);
  for (auto& item : model->named_children()) {
    if (namespaces.count(item.key())) item.value()->train();
    else item.value()->eval();
  }
}

void freeze(torch::nn::Module& module) {
  for (auto& p : module.parameters()) p.set_requires_grad(false);
  module.eval();
}

std::string state_digest(const std::map<std::string, torch::Tensor>& state,
                         const std::string& prefix) {
  Sha256 h;
  for (const auto& [name, t] : state) {
    if (name.rfind(prefix, 0) != 0) continue;
    auto c = t.detach().contiguous().cpu();
    std::ostringstream header;
    header << name << '|' << c.scalar_type() << '|' << c.sizes() << '\n';
    h.update(header.str());
    h.update(std::span(static_cast<const std::byte*>(c.data_ptr()), c.nbytes()));
  }
  const auto d = h.finish();
  return to_hex(d);
}

std::string parameter_digest(const torch::nn::Module& module, const std::string& prefix) {
  std::map<std::string, torch::Tensor> items;
  for (const auto& item : module.named_parameters())
    if (item.key().rfind(prefix, 0) == 0) items.emplace(item.key(), item.value());
  for (const auto& item : module.named_buffers())
    if (item.key().rfind(prefix, 0) == 0) items.emplace(item.key(), item.value());
  return state_digest(items, prefix);
}

std::map<std::string, torch::Tensor> snapshot_state(const torch::nn::Module& module) {
  std::map<std::string, torch::Tensor> out;
  for (const auto& item : module.named_parameters())
    out.emplace(item.key(), item.value().detach().clone());
  for (const auto& item : module.named_buffers())
    out.emplace(item.key(), item.value().detach().clone());
  return out;
}

void restore_state(torch::nn::Module& module, const std::map<std::string, torch::Tensor>& state) {
  torch::NoGradGuard guard;
  auto assign = [&](const std::string& name, torch::Tensor& dst) {
    auto it = state.find(name);
    if (it == state.end()) throw IntegrityError("state is missing tensor '" + name + "'");
    if (it->second.sizes() != dst.sizes() || it->second.scalar_type() != dst.scalar_type())
      throw IntegrityError("state tensor '" + name + "' has the wrong shape or type");
    dst.copy_(it->second);
  };
  for (auto& item : module.named_parameters()) assign(item.key(), item.value());
  for (auto& item : module.named_buffers()) assign(item.key(), item.value());
}

}  // namespace cxrgaze
