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

#include "dfkd/losses.hpp"

#include <cmath>
#include <string>

#include "dfkd/errors.hpp"

namespace dfkd::losses {
namespace {

constexpr double kProbSumTolerance = 1e-5;

void require_batch(const torch::Tensor& t, const char* what) {
  if (!t.defined() || t.dim() != 2) {
    throw InvalidArgument(std::string(what) + ": expected a 2-D (n, K) tensor");
  }
  if (t.size(0) == 0 || t.size(1) == 0) {
    throw InvalidArgument(std::string(what) + ": empty batch");
  }
}

void require_prob_batch(const torch::Tensor& probs, const char* what) {
  require_batch(probs, what);
  torch::NoGradGuard no_grad;
  const auto p = probs.to(torch::kDouble);
  if (p.lt(0.0).any().item<bool>() || p.gt(1.0 + kProbSumTolerance).any().item<bool>()) {
    throw InvalidArgument(std::string(what) + ": probabilities outside [0, 1]");
  }
  const double worst = (p.sum(1) - 1.0).abs().max().item<double>();
  if (!(worst <= kProbSumTolerance)) {
    throw InvalidArgument(std::string(what) + ": rows do not sum to 1");
  }
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw InvalidArgument(std::string(what) + " must be finite");
  }
}

// Per-row L2 distance between two equally shaped batches, flattened past the
// batch dimension. The norm backward masks zero-distance rows to a zero
// subgradient.
torch::Tensor rowwise_distance(const torch::Tensor& a, const torch::Tensor& b) {
  const auto diff = (a - b).flatten(1);
  return torch::linalg_vector_norm(diff, 2, {1}, false, c10::nullopt);
}

void require_pairs(const torch::Tensor& images_a, const torch::Tensor& images_b,
                   const torch::Tensor& side_a, const torch::Tensor& side_b,
                   const char* side_name) {
  if (!images_a.defined() || !images_b.defined() || images_a.dim() < 2) {
    throw InvalidArgument("diversity loss: image batches must be at least 2-D");
  }
  if (images_a.sizes() != images_b.sizes()) {
    throw InvalidArgument("diversity loss: image batches differ in shape");
  }
  if (images_a.size(0) == 0) {
    throw InvalidArgument("diversity loss: empty batch");
  }
  require_batch(side_a, side_name);
  require_batch(side_b, side_name);
  if (side_a.sizes() != side_b.sizes() || side_a.size(0) != images_a.size(0)) {
    throw InvalidArgument(std::string("diversity loss: ") + side_name +
                          " batch size does not match the image batch");
  }
}

torch::Tensor ratio_reciprocal(const torch::Tensor& image_distance,
                               const torch::Tensor& side_distance,
                               double epsilon) {
  const auto ratio = image_distance / (side_distance + epsilon);
  return 1.0 / (ratio.mean() + epsilon);
}

}  // namespace

torch::Tensor softmax_with_temperature(const torch::Tensor& logits, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw InvalidArgument("softmax_with_temperature: tau must be positive");
  }
  if (!logits.defined() || logits.dim() == 0 || logits.size(-1) == 0) {
    throw InvalidArgument("softmax_with_temperature: empty logits");
  }
  {
    torch::NoGradGuard no_grad;
    if (!torch::isfinite(logits).all().item<bool>()) {
      throw InvalidArgument("softmax_with_temperature: non-finite logits");
    }
  }
  const auto scaled = logits / tau;
  const auto shifted = scaled - std::get<0>(scaled.max(-1, true)).detach();
  const auto e = shifted.exp();
  return e / e.sum(-1, true);
}

torch::Tensor one_hot_loss(const torch::Tensor& teacher_probs) {
  require_prob_batch(teacher_probs, "one_hot_loss");
  // argmax returns the first maximal index on ties.
  const auto cls = teacher_probs.detach().argmax(1, true);
  const auto picked = teacher_probs.gather(1, cls).squeeze(1);
  return -picked.clamp_min(kProbabilityFloor).log().mean();
}

torch::Tensor information_entropy_loss(const torch::Tensor& teacher_probs) {
  require_prob_batch(teacher_probs, "information_entropy_loss");
  const auto k = static_cast<double>(teacher_probs.size(1));
  const auto mean_probs = teacher_probs.mean(0);
  return (mean_probs * mean_probs.clamp_min(kProbabilityFloor).log()).sum() / k;
}

torch::Tensor diversity_seeking_loss(const torch::Tensor& images_a,
                                     const torch::Tensor& images_b,
                                     const torch::Tensor& probs_a,
                                     const torch::Tensor& probs_b,
                                     double epsilon) {
  if (!(epsilon > 0.0)) {
    throw InvalidArgument("diversity_seeking_loss: epsilon must be positive");
  }
  require_pairs(images_a, images_b, probs_a, probs_b, "probabilities");
  return ratio_reciprocal(rowwise_distance(images_a, images_b),
                          rowwise_distance(probs_a, probs_b), epsilon);
}

torch::Tensor mskd_diversity_loss(const torch::Tensor& images_a,
                                  const torch::Tensor& images_b,
                                  const torch::Tensor& latents_a,
                                  const torch::Tensor& latents_b,
                                  double epsilon) {
  if (!(epsilon > 0.0)) {
    throw InvalidArgument("mskd_diversity_loss: epsilon must be positive");
  }
  require_pairs(images_a, images_b, latents_a, latents_b, "latents");
  return ratio_reciprocal(rowwise_distance(images_a, images_b),
                          rowwise_distance(latents_a, latents_b), epsilon);
}

torch::Tensor rdskd_generator_loss(const torch::Tensor& l_oh,
                                   const torch::Tensor& l_ie,
                                   const torch::Tensor& l_ds,
                                   const GeneratorLossState& state) {
  if (!state.initialized) {
    throw StateError(
        "rdskd_generator_loss: loss anchors are uncalibrated; run a "
        "calibration pass before the first epoch");
  }
  return torch::exp(l_oh - state.prev_oh) + torch::exp(l_ie - state.prev_ie) + l_ds;
}

double rdskd_generator_loss(double l_oh, double l_ie, double l_ds,
                            const GeneratorLossState& state) {
  if (!state.initialized) {
    throw StateError("rdskd_generator_loss: loss anchors are uncalibrated");
  }
  require_finite(l_oh, "l_oh");
  require_finite(l_ie, "l_ie");
  require_finite(l_ds, "l_ds");
  return std::exp(l_oh - state.prev_oh) + std::exp(l_ie - state.prev_ie) + l_ds;
}

GeneratorLossState update_loss_state(const GeneratorLossState& state,
                                     double epoch_mean_oh,
                                     double epoch_mean_ie) {
  require_finite(epoch_mean_oh, "update_loss_state: epoch_mean_oh");
  require_finite(epoch_mean_ie, "update_loss_state: epoch_mean_ie");
  GeneratorLossState next = state;
  next.prev_oh = epoch_mean_oh;
  next.prev_ie = epoch_mean_ie;
  next.initialized = true;
  return next;
}

torch::Tensor kd_loss(const torch::Tensor& teacher_logits,
                      const torch::Tensor& student_logits, double tau) {
  if (!(tau > 0.0)) {
    throw InvalidArgument("kd_loss: tau must be positive");
  }
  require_batch(teacher_logits, "kd_loss");
  require_batch(student_logits, "kd_loss");
  if (teacher_logits.sizes() != student_logits.sizes()) {
    throw InvalidArgument("kd_loss: teacher and student logits differ in shape");
  }
  const auto log_pt = torch::log_softmax(teacher_logits.detach() / tau, 1);
  const auto log_ps = torch::log_softmax(student_logits / tau, 1);
  return (log_pt.exp() * (log_pt - log_ps)).sum(1).mean();
}

torch::Tensor activation_loss(const torch::Tensor& features) {
  if (!features.defined() || features.dim() < 2 || features.size(0) == 0) {
    throw InvalidArgument("activation_loss: expected a nonempty (N, F) batch");
  }
  return -features.abs().mean();
}

torch::Tensor dafl_generator_loss(const torch::Tensor& l_oh,
                                  const torch::Tensor& activation,
                                  const torch::Tensor& l_ie, double alpha,
                                  double beta) {
  require_finite(alpha, "dafl_generator_loss: alpha");
  require_finite(beta, "dafl_generator_loss: beta");
  return l_oh + alpha * activation + beta * l_ie;
}

double dafl_generator_loss(double l_oh, double activation, double l_ie,
                           double alpha, double beta) {
  require_finite(l_oh, "l_oh");
  require_finite(activation, "activation");
  require_finite(l_ie, "l_ie");
  require_finite(alpha, "alpha");
  require_finite(beta, "beta");
  return l_oh + alpha * activation + beta * l_ie;
}

}  // namespace dfkd::losses
