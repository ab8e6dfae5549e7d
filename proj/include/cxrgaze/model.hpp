// Copyright 2026 The cxrgaze Authors
// SPDX-License-Identifier: Apache-2.0

// The dual-encoder multi-task network. Parameters are namespaced by role so
// each training stage can freeze everything outside its own namespaces:
//
//   backbone.*     DenseNet-201 encoder
//   embed_head.*   contrastive projection (896 -> 128, L2-normalized)
//   cls_head.*     backbone-only 3-class head (1920 -> 3)
//   salnet.*       Res_SE-UNet saliency predictor
//   fusion_head.*  multi-scale feature-fusion classifier

#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "cxrgaze/backbone.hpp"
#include "cxrgaze/fusion_classifier.hpp"
#include "cxrgaze/model_config.hpp"
#include "cxrgaze/saliency_net.hpp"

namespace cxrgaze {

inline const std::vector<std::string>& model_namespaces() {
  static const std::vector<std::string> names = {"backbone", "embed_head", "cls_head", "salnet",
                                                 "fusion_head"};
  return names;
}

class CxrGazeModelImpl : public torch::nn::Module {
 public:
  explicit CxrGazeModelImpl(const ModelConfig& config);

  torch::Tensor forward_features(const torch::Tensor& images);
  torch::Tensor forward_embedding(const torch::Tensor& images);
  torch::Tensor embedding_from_features(const torch::Tensor& features);
  torch::Tensor forward_class_logits(const torch::Tensor& images);
  // Backbone features are replaced by zeros when backbone fusion is disabled;
  // an undefined tensor is accepted in that case.
  SaliencyOutput forward_saliency(const torch::Tensor& images, const torch::Tensor& features);
  torch::Tensor forward_fused_logits(const torch::Tensor& features,
                                     const torch::Tensor& decoder_features);

  const ModelConfig& config() const { return config_; }

  DenseNetBackbone backbone{nullptr};
  torch::nn::Linear embed_head{nullptr};
  torch::nn::Linear cls_head{nullptr};
  SaliencyNet salnet{nullptr};
  FusionClassifier fusion_head{nullptr};

 private:
  ModelConfig config_;
};
TORCH_MODULE(CxrGazeModel);

// Marks parameters trainable iff their top-level namespace is listed, and puts
// the corresponding submodules in train mode (all others in eval mode).
void set_trainable_namespaces(CxrGazeModel& model, const std::set<std::string>& namespaces);

// Non-trainable, eval mode.
void freeze(torch::nn::Module& module);

// SHA-256 over the names, shapes and raw bytes of every parameter and buffer
// whose name starts with `prefix`, visited in sorted name order.
std::string parameter_digest(const torch::nn::Module& module, const std::string& prefix = "");
// Same digest computed over a name -> tensor map.
std::string state_digest(const std::map<std::string, torch::Tensor>& state,
                         const std::string& prefix = "");

// Copies all parameters and buffers (deep) keyed by name.
std::map<std::string, torch::Tensor> snapshot_state(const torch::nn::Module& module);
void restore_state(torch::nn::Module& module, const std::map<std::string, torch::Tensor>& state);

}  // namespace cxrgaze
