// Copyright 2026 The dfkd Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Generator and student objectives for data-free distillation.
//
// Every function here is a pure tensor expression: it keeps the autograd
// graph of its inputs intact, so the returned scalar can be used directly as a
// training objective. Batches of probability or logit vectors are 2-D tensors
// of shape (n, K); image batches are (n, C, H, W); latent batches are (n, D).

#pragma once

#include <torch/torch.h>

namespace dfkd::losses {

inline constexpr double kProbabilityFloor = 1e-12;
inline constexpr double kDefaultEpsilon = 1e-5;

// Anchors for the exponential-increment objective: the epoch-mean one-hot and
// information-entropy losses measured during the previous generator epoch.
struct GeneratorLossState {
  double prev_oh = 0.0;
  double prev_ie = 0.0;
  bool initialized = false;
};

// exp(a / tau) / sum_i exp(a_i / tau) along the last dimension, computed with
// the max subtracted first. tau == 1 is the ordinary softmax.
torch::Tensor softmax_with_temperature(const torch::Tensor& logits, double tau);

// Mean over the batch of -log p[argmax p]. Ties go to the lowest class index.
torch::Tensor one_hot_loss(const torch::Tensor& teacher_probs);

// (1/K) * sum_k pbar_k log pbar_k, where pbar is the batch-mean distribution.
// Minimized, at -(log K)/K, when pbar is uniform. 0 log 0 is taken as 0.
torch::Tensor information_entropy_loss(const torch::Tensor& teacher_probs);

// Reciprocal of the mean image-to-prediction distance ratio over paired
// samples:
//
//   ratio_i = |img_a_i - img_b_i|_2 / (|probs_a_i - probs_b_i|_2 + eps)
//   loss    = 1 / (mean_i ratio_i + eps)
//
// probs_* are temperature-1 teacher softmax outputs for the paired images.
// Identical image pairs give the capped value 1/eps.
torch::Tensor diversity_seeking_loss(const torch::Tensor& images_a,
                                     const torch::Tensor& images_b,
                                     const torch::Tensor& probs_a,
                                     const torch::Tensor& probs_b,
                                     double epsilon = kDefaultEpsilon);

// Mode-seeking variant used by the MSKD baseline: the ratio denominator is the
// latent-space distance |z_i - z'_i|_2 + eps instead of the prediction
// distance.
torch::Tensor mskd_diversity_loss(const torch::Tensor& images_a,
                                  const torch::Tensor& images_b,
                                  const torch::Tensor& latents_a,
                                  const torch::Tensor& latents_b,
                                  double epsilon = kDefaultEpsilon);

// exp(l_oh - prev_oh) + exp(l_ie - prev_ie) + l_ds. The anchors are plain
// numbers, so no gradient reaches them. Throws StateError when the state has
// not been calibrated yet.
torch::Tensor rdskd_generator_loss(const torch::Tensor& l_oh,
                                   const torch::Tensor& l_ie,
                                   const torch::Tensor& l_ds,
                                   const GeneratorLossState& state);

// Scalar overload, convenient for checking the combination rule.
double rdskd_generator_loss(double l_oh, double l_ie, double l_ds,
                            const GeneratorLossState& state);

// Replace the anchors with this epoch's means.
GeneratorLossState update_loss_state(const GeneratorLossState& state,
                                     double epoch_mean_oh,
                                     double epoch_mean_ie);

// Batch mean of KL(f_tau(teacher) || f_tau(student)). The teacher side is
// detached. No tau^2 rescaling is applied.
torch::Tensor kd_loss(const torch::Tensor& teacher_logits,
                      const torch::Tensor& student_logits, double tau);

// -(1/(N F)) sum_j |features_j|_1 over a (N, F) feature batch, i.e. the
// negated mean absolute activation.
torch::Tensor activation_loss(const torch::Tensor& features);

// l_oh + alpha * activation + beta * l_ie.
torch::Tensor dafl_generator_loss(const torch::Tensor& l_oh,
                                  const torch::Tensor& activation,
                                  const torch::Tensor& l_ie, double alpha,
                                  double beta);
double dafl_generator_loss(double l_oh, double activation, double l_ie,
                           double alpha, double beta);

}  // namespace dfkd::losses
