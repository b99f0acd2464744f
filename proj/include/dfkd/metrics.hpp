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

// Image-set quality and diversity metrics over a pluggable embedder.
//
// The metrics never mutate their inputs. Where a metric splits or samples
// the image set, the rows are first put in a canonical order (by a content
// hash), so the result does not depend on the order images were supplied in.

#pragma once

#include <torch/torch.h>

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dfkd/models.hpp"

namespace dfkd::metrics {

inline constexpr std::int64_t kDefaultSplits = 10;
inline constexpr std::int64_t kDefaultPairs = 500;

struct EmbedderHandle {
  std::string name;
  // images (n, C, H, W) -> probabilities (n, K)
  std::function<torch::Tensor(const torch::Tensor&)> probability_fn;
  // images (n, C, H, W) -> features (n, F)
  std::function<torch::Tensor(const torch::Tensor&)> feature_fn;
};

// Softmax outputs and penultimate features of a classifier, evaluated in
// eval mode without gradients, batch_size images at a time.
EmbedderHandle classifier_embedder(models::Classifier model, std::int64_t batch_size = 500);

// FNV-1a over the raw bytes of each row of a contiguous tensor.
std::vector<std::uint64_t> row_hashes(const torch::Tensor& rows);

// Row indices sorted by (hash, bytes); equal rows stay adjacent.
std::vector<std::int64_t> canonical_order(const torch::Tensor& rows);

// exp(mean_i KL(p_i || p_split)) averaged over `splits` contiguous chunks of
// the rows, taken in the order given. Throws when n < 2 * splits.
double inception_score_from_probs(const torch::Tensor& probs, std::int64_t splits = kDefaultSplits);

// Inception score of an image set; rows are put in canonical order first.
double inception_score(const torch::Tensor& images, const EmbedderHandle& embedder,
                       std::int64_t splits = kDefaultSplits);

struct GaussianSummary {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

// Sample mean and unbiased (n - 1) covariance of a (n, F) feature batch.
GaussianSummary summarize(const torch::Tensor& features);

// Throws InvalidArgument unless the covariance is square, matches the mean,
// is symmetric within 1e-8 and has no eigenvalue below -1e-8.
void check_summary(const GaussianSummary& summary);

// |mu1 - mu2|^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}). The trace of the square root
// is computed as Tr((S1^{1/2} S2 S1^{1/2})^{1/2}) with both square roots
// taken by symmetric eigendecomposition, negative eigenvalues clipped to 0.
double frechet_distance(const GaussianSummary& real, const GaussianSummary& fake);

// Mean L2 distance between feature rows over num_pairs random pairs of
// distinct rows. When num_pairs covers every unordered pair, the exact
// all-pairs mean is returned instead. Rows are put in canonical order first.
double pairwise_diversity_features(const torch::Tensor& features, std::int64_t num_pairs,
                                   std::uint64_t seed);

double pairwise_diversity(const torch::Tensor& images, const EmbedderHandle& embedder,
                          std::int64_t num_pairs = kDefaultPairs, std::uint64_t seed = 0);

// Per-class mean of generated images, classes taken from the teacher argmax.
struct ClassGrid {
  torch::Tensor means;               // (K, C, H, W); zeros for empty classes
  std::vector<std::int64_t> counts;  // samples assigned to each class
  std::vector<bool> empty;           // true where counts[k] == 0
};

// Draws samples_per_class * K latents from a generator seeded by seed and
// averages them by teacher class. Both models are used in eval mode.
ClassGrid average_image_grid(const models::Generator& generator, const models::Classifier& teacher,
                             std::int64_t samples_per_class, std::uint64_t seed,
                             std::int64_t batch_size = 500);

// Mean over non-empty classes of the pixel variance within each class mean
// image. Higher values mean higher-contrast class averages.
double grid_pixel_variance(const ClassGrid& grid);

// Draws n images from a generator in eval mode.
torch::Tensor generate_images(const models::Generator& generator, std::int64_t n,
                              std::uint64_t seed, std::int64_t batch_size = 500);

}  // namespace dfkd::metrics
