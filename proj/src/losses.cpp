// Copyright 2026 The cxrgaze Authors
// SPDX-License-Identifier: Apache-2.0

#include "cxrgaze/losses.hpp"

#include <sstream>

#include "cxrgaze/errors.hpp"

namespace cxrgaze::losses {
namespace {

void check_unit_rows(const torch::Tensor& x, const char* what) {
  torch::NoGradGuard guard;
  const auto dev = (x.norm(2, 1) - 1.0).abs().max().item<double>();
  if (dev > kUnitNormTolerance) {
    std::ostringstream msg;
    msg << "triplet loss: " << what << " embeddings are not unit-norm (max deviation " << dev
        << ")";
    throw ValidationError(msg.str());
  }
}

}  // namespace

torch::Tensor triplet_loss(const torch::Tensor& anchor, const torch::Tensor& positive,
                           const torch::Tensor& negative, double margin, bool check_unit_norm) {
  if (anchor.dim() != 2 || anchor.sizes() != positive.sizes() ||
      anchor.sizes() != negative.sizes())
    throw ShapeError("triplet loss: anchor/positive/negative must share shape [B,D]");
  if (!(margin > 0)) throw ValidationError("triplet loss: margin must be positive");
  if (check_unit_norm) {
    check_unit_rows(anchor, "anchor");
    check_unit_rows(positive, "positive");
    check_unit_rows(negative, "negative");
  }
  const auto d_pos = (anchor - positive).square().sum(1);
  const auto d_neg = (anchor - negative).square().sum(1);
  return torch::relu(d_pos - d_neg + margin).mean();
}

torch::Tensor cross_entropy(const torch::Tensor& logits, const torch::Tensor& labels) {
  if (logits.dim() != 2 || labels.dim() != 1 || logits.size(0) != labels.size(0))
    throw ShapeError("cross entropy: expected logits [B,C] and labels [B]");
  {
    torch::NoGradGuard guard;
    if (labels.numel() > 0 &&
        (labels.min().item<int64_t>() < 0 || labels.max().item<int64_t>() >= logits.size(1)))
      throw ValidationError("cross entropy: label out of range");
  }
  const auto log_probs = torch::log_softmax(logits, 1);
  return -log_probs.gather(1, labels.to(torch::kLong).unsqueeze(1)).squeeze(1).mean();
}

torch::Tensor kl_saliency_loss(const torch::Tensor& predicted, const torch::Tensor& target,
                               double epsilon) {
  if (predicted.sizes() != target.sizes() || predicted.dim() < 2)
    throw ShapeError("kl loss: predicted and target must share shape [B,...]");
  const auto b = predicted.size(0);
  const auto p = predicted.reshape({b, -1});
  const auto t = target.reshape({b, -1});
  {
    torch::NoGradGuard guard;
    if ((p < 0).any().item<bool>() || (t < 0).any().item<bool>())
      throw ValidationError("kl loss: negative map entry");
    const auto dev_p = (p.sum(1) - 1.0).abs().max().item<double>();
    const auto dev_t = (t.sum(1) - 1.0).abs().max().item<double>();
    if (dev_p > 1e-4 || dev_t > 1e-4)
      throw ValidationError("kl loss: inputs must each sum to 1");
  }
  // xlogy(t, t) is 0 where t == 0.
  return (torch::xlogy(t, t) - t * torch::log(p + epsilon)).sum(1).mean();
}

}  // namespace cxrgaze::losses
