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

#include "dfkd/metrics.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include "dfkd/errors.hpp"

namespace dfkd::metrics {
namespace {

constexpr double kSymmetryTolerance = 1e-8;
constexpr double kEigenTolerance = 1e-8;

torch::Tensor as_rows(const torch::Tensor& t) {
  if (!t.defined() || t.dim() < 1) throw InvalidArgument("metrics: expected a batch tensor");
  return t.reshape({t.size(0), -1}).contiguous();
}

Eigen::MatrixXd to_eigen(const torch::Tensor& rows) {
  const auto d = rows.to(torch::kFloat64).contiguous();
  Eigen::MatrixXd m(d.size(0), d.size(1));
  const double* src = d.data_ptr<double>();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = src[i * m.cols() + j];
  }
  return m;
}

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

torch::Tensor batched(const torch::Tensor& images, std::int64_t batch_size,
                      const std::function<torch::Tensor(const torch::Tensor&)>& fn) {
  std::vector<torch::Tensor> parts;
  for (std::int64_t s = 0; s < images.size(0); s += batch_size) {
    parts.push_back(fn(images.slice(0, s, std::min(images.size(0), s + batch_size))));
  }
  return torch::cat(parts, 0);
}

double mean_pair_distance(const Eigen::MatrixXd& x, std::int64_t num_pairs, std::uint64_t seed) {
  const std::int64_t n = x.rows();
  const auto all_pairs = n * (n - 1) / 2;
  double sum = 0.0;
  if (num_pairs >= all_pairs) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) sum += (x.row(i) - x.row(j)).norm();
    }
    return sum / static_cast<double>(all_pairs);
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int64_t> first(0, n - 1);
  std::uniform_int_distribution<std::int64_t> second(0, n - 2);
  for (std::int64_t k = 0; k < num_pairs; ++k) {
    const auto i = first(rng);
    auto j = second(rng);
    if (j >= i) ++j;
    sum += (x.row(i) - x.row(j)).norm();
  }
  return sum / static_cast<double>(num_pairs);
}

}  // namespace

EmbedderHandle classifier_embedder(models::Classifier model, std::int64_t batch_size) {
  if (!model) throw InvalidArgument("classifier_embedder: no model");
  if (batch_size < 1) throw InvalidArgument("classifier_embedder: batch_size must be >= 1");
  EmbedderHandle h;
  h.name = std::string(models::to_string(model->spec().architecture));
  auto run = [model, batch_size](const torch::Tensor& images, bool probs) {
    torch::NoGradGuard no_grad;
    const bool was_training = model->is_training();
    model->eval();
    auto out = batched(images, batch_size, [&](const torch::Tensor& b) {
      const auto r = models::forward_classifier(*model, b);
      return probs ? torch::softmax(r.logits, 1) : r.features;
    });
    model->train(was_training);
    return out;
  };
  h.probability_fn = [run](const torch::Tensor& x) { return run(x, true); };
  h.feature_fn = [run](const torch::Tensor& x) { return run(x, false); };
  return h;
}

std::vector<std::uint64_t> row_hashes(const torch::Tensor& rows) {
  const auto r = as_rows(rows);
  const auto n = r.size(0);
  const auto row_bytes = static_cast<std::size_t>(r.size(1)) * r.element_size();
  const auto* base = static_cast<const unsigned char*>(r.data_ptr());
  std::vector<std::uint64_t> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    const auto* p = base + static_cast<std::size_t>(i) * row_bytes;
    for (std::size_t b = 0; b < row_bytes; ++b) {
      h ^= p[b];
      h *= 0x100000001b3ull;
    }
    out[static_cast<std::size_t>(i)] = h;
  }
  return out;
}

std::vector<std::int64_t> canonical_order(const torch::Tensor& rows) {
  const auto r = as_rows(rows);
  const auto hashes = row_hashes(r);
  const auto row_bytes = static_cast<std::size_t>(r.size(1)) * r.element_size();
  const auto* base = static_cast<const unsigned char*>(r.data_ptr());
  std::vector<std::int64_t> order(hashes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    const auto ua = static_cast<std::size_t>(a), ub = static_cast<std::size_t>(b);
    if (hashes[ua] != hashes[ub]) return hashes[ua] < hashes[ub];
    return std::memcmp(base + ua * row_bytes, base + ub * row_bytes, row_bytes) < 0;
  });
  return order;
}

double inception_score_from_probs(const torch::Tensor& probs, std::int64_t splits) {
  if (!probs.defined() || probs.dim() != 2) {
    throw InvalidArgument("inception_score: expected an (n, K) probability table");
  }
  if (splits < 1) throw InvalidArgument("inception_score: splits must be >= 1");
  const auto n = probs.size(0);
  if (n < 2 * splits) {
    throw InvalidArgument("inception_score: need at least " + std::to_string(2 * splits) +
                          " images for " + std::to_string(splits) + " splits, got " +
                          std::to_string(n));
  }
  const auto p = probs.to(torch::kFloat64);
  if (p.lt(0).any().item<bool>() || (p.sum(1) - 1).abs().gt(1e-5).any().item<bool>()) {
    throw InvalidArgument("inception_score: rows must be probability vectors");
  }
  double total = 0.0;
  for (std::int64_t s = 0; s < splits; ++s) {
    const auto part = p.slice(0, s * n / splits, (s + 1) * n / splits);
    const auto marginal = part.mean(0, true);
    // xlogy keeps 0 * log 0 at 0.
    const auto kl = (torch::xlogy(part, part) - torch::xlogy(part, marginal)).sum(1);
    total += std::exp(kl.mean().item<double>());
  }
  return total / static_cast<double>(splits);
}

double inception_score(const torch::Tensor& images, const EmbedderHandle& embedder,
                       std::int64_t splits) {
  if (!embedder.probability_fn) throw InvalidArgument("inception_score: embedder has no probability_fn");
  if (!images.defined() || images.size(0) < 2 * std::max<std::int64_t>(splits, 1)) {
    throw InvalidArgument("inception_score: too few images for " + std::to_string(splits) +
                          " splits");
  }
  const auto order = canonical_order(images);
  const auto idx = torch::tensor(order, torch::kInt64);
  return inception_score_from_probs(embedder.probability_fn(images.index_select(0, idx)), splits);
}

GaussianSummary summarize(const torch::Tensor& features) {
  if (!features.defined() || features.dim() != 2) {
    throw InvalidArgument("summarize: expected an (n, F) feature batch");
  }
  if (features.size(0) < 2) throw InvalidArgument("summarize: need at least 2 rows");
  const auto x = to_eigen(features);
  GaussianSummary s;
  s.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - s.mean.transpose();
  s.covariance = (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
  s.covariance = 0.5 * (s.covariance + s.covariance.transpose());
  return s;
}

void check_summary(const GaussianSummary& s) {
  const auto d = s.mean.size();
  if (s.covariance.rows() != d || s.covariance.cols() != d) {
    throw InvalidArgument("gaussian summary: covariance is " +
                          std::to_string(s.covariance.rows()) + "x" +
                          std::to_string(s.covariance.cols()) + " but mean has " +
                          std::to_string(d) + " entries");
  }
  if ((s.covariance - s.covariance.transpose()).cwiseAbs().maxCoeff() > kSymmetryTolerance) {
    throw InvalidArgument("gaussian summary: covariance is not symmetric");
  }
  if (d > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s.covariance, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -kEigenTolerance) {
      throw InvalidArgument("gaussian summary: covariance has a negative eigenvalue");
    }
  }
}

double frechet_distance(const GaussianSummary& real, const GaussianSummary& fake) {
  if (real.mean.size() != fake.mean.size()) {
    throw InvalidArgument("frechet_distance: dimension mismatch (" +
                          std::to_string(real.mean.size()) + " vs " +
                          std::to_string(fake.mean.size()) + ")");
  }
  check_summary(real);
  check_summary(fake);
  const Eigen::MatrixXd root1 = sqrt_psd(real.covariance);
  Eigen::MatrixXd inner = root1 * fake.covariance * root1;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(inner, Eigen::EigenvaluesOnly);
  const double trace_sqrt = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double mean_term = (real.mean - fake.mean).squaredNorm();
  const double value =
      mean_term + real.covariance.trace() + fake.covariance.trace() - 2.0 * trace_sqrt;
  return std::max(0.0, value);
}

double pairwise_diversity_features(const torch::Tensor& features, std::int64_t num_pairs,
                                   std::uint64_t seed) {
  const auto rows = as_rows(features);
  if (rows.size(0) < 2) throw InvalidArgument("pairwise_diversity: need at least 2 images");
  if (num_pairs < 1) throw InvalidArgument("pairwise_diversity: num_pairs must be >= 1");
  const auto order = canonical_order(rows);
  return mean_pair_distance(to_eigen(rows.index_select(0, torch::tensor(order, torch::kInt64))),
                            num_pairs, seed);
}

double pairwise_diversity(const torch::Tensor& images, const EmbedderHandle& embedder,
                          std::int64_t num_pairs, std::uint64_t seed) {
  if (!embedder.feature_fn) throw InvalidArgument("pairwise_diversity: embedder has no feature_fn");
  if (!images.defined() || images.size(0) < 2) {
    throw InvalidArgument("pairwise_diversity: need at least 2 images");
  }
  if (num_pairs < 1) throw InvalidArgument("pairwise_diversity: num_pairs must be >= 1");
  // Pairs are drawn over the image content order.
  const auto order = canonical_order(images);
  const auto sorted = images.index_select(0, torch::tensor(order, torch::kInt64));
  return mean_pair_distance(to_eigen(as_rows(embedder.feature_fn(sorted))), num_pairs, seed);
}

torch::Tensor generate_images(const models::Generator& generator, std::int64_t n,
                              std::uint64_t seed, std::int64_t batch_size) {
  if (n < 1) throw InvalidArgument("generate_images: n must be >= 1");
  models::Generator g = generator;
  torch::NoGradGuard no_grad;
  const bool was_training = g->is_training();
  g->eval();
  auto rng = at::detail::createCPUGenerator(seed);
  std::vector<torch::Tensor> parts;
  for (std::int64_t s = 0; s < n; s += batch_size) {
    const auto m = std::min(batch_size, n - s);
    parts.push_back(g->forward(at::randn({m, g->spec().latent_dim}, rng)));
  }
  g->train(was_training);
  return torch::cat(parts, 0);
}

ClassGrid average_image_grid(const models::Generator& generator, const models::Classifier& teacher,
                             std::int64_t samples_per_class, std::uint64_t seed,
                             std::int64_t batch_size) {
  if (!generator || !teacher) throw InvalidArgument("average_image_grid: missing model");
  if (samples_per_class < 1) throw InvalidArgument("average_image_grid: samples_per_class must be >= 1");
  const auto k = teacher->spec().num_classes;
  const auto images = generate_images(generator, samples_per_class * k, seed, batch_size);
  const auto probs = classifier_embedder(teacher, batch_size).probability_fn(images);
  const auto labels = probs.argmax(1);

  ClassGrid grid;
  auto shape = images.sizes().vec();
  shape[0] = k;
  grid.means = torch::zeros(shape, images.options());
  for (std::int64_t c = 0; c < k; ++c) {
    const auto mask = labels.eq(c);
    const auto count = mask.sum().item<std::int64_t>();
    grid.counts.push_back(count);
    grid.empty.push_back(count == 0);
    if (count > 0) grid.means[c] = images.index({mask}).mean(0);
  }
  return grid;
}

double grid_pixel_variance(const ClassGrid& grid) {
  double total = 0.0;
  std::int64_t used = 0;
  for (std::size_t c = 0; c < grid.empty.size(); ++c) {
    if (grid.empty[c]) continue;
    total += grid.means[static_cast<std::int64_t>(c)].to(torch::kFloat64).var(false).item<double>();
    ++used;
  }
  return used == 0 ? 0.0 : total / static_cast<double>(used);
}

}  // namespace dfkd::metrics
