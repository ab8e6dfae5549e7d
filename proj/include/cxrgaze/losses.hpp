// Copyright 2026 The cxrgaze Authors
// SPDX-License-Identifier: Apache-2.0

// Training objectives. All take and return tensors so autograd applies; the
// float64 path is exercised by the gradient checks.

#pragma once

#include <torch/torch.h>

namespace cxrgaze::losses {

inline constexpr double kTripletMargin = 0.2;
inline constexpr double kKlEpsilon = 1e-8;
inline constexpr double kUnitNormTolerance = 1e-4;

// mean_i max(0, |a_i - p_i|^2 - |a_i - n_i|^2 + margin). Inputs are [B,D].
// With check_unit_norm, rows that are not unit length (1e-4) raise ValidationError.
torch::Tensor triplet_loss(const torch::Tensor& anchor, const torch::Tensor& positive,
                           const torch::Tensor& negative, double margin = kTripletMargin,
                           bool check_unit_norm = true);

// Mean negative log-softmax of the true class. logits [B,3], labels [B] (int64).
torch::Tensor cross_entropy(const torch::Tensor& logits, const torch::Tensor& labels);

// mean_b sum_pixels T ln(T / (P + eps)), 0 ln 0 = 0. Inputs [B, ...] with each
// sample a distribution (sum 1 within 1e-4); KL(target || predicted).
torch::Tensor kl_saliency_loss(const torch::Tensor& predicted, const torch::Tensor& target,
                               double epsilon = kKlEpsilon);

}  // namespace cxrgaze::losses
