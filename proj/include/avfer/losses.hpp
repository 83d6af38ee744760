/*
 * Copyright 2026 The avfer Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "avfer/core/error.hpp"
#include "avfer/core/tensor.hpp"

namespace avfer {

/// Probabilities below this are clamped before the log.
inline constexpr double kProbClamp = 1e-12;

inline constexpr std::size_t kNumQuadrants = 4;

/// Coarse category (valence-arousal quadrant, 1..4) of every class.
class QuadrantMap {
 public:
  QuadrantMap() = default;
  explicit QuadrantMap(std::vector<int> quadrant_of_class)
      : map_(std::move(quadrant_of_class)) {
    if (map_.empty()) throw ConfigError("quadrant map is empty");
    for (int q : map_) {
      if (q < 1 || q > static_cast<int>(kNumQuadrants)) {
        throw ConfigError("quadrant map values must be in 1..4, got " +
                          std::to_string(q));
      }
    }
  }

  /// neutral Q4, anger Q2, disgust Q2, fear Q2, happiness Q1, sadness Q3,
  /// surprise Q1, other Q4.
  static QuadrantMap default_map() { return QuadrantMap({4, 2, 2, 2, 1, 3, 1, 4}); }

  std::size_t num_classes() const { return map_.size(); }
  int quadrant(std::size_t cls) const { return map_.at(cls); }
  const std::vector<int>& values() const { return map_; }

 private:
  std::vector<int> map_;
};

/// Symmetric 4x4 penalty matrix with zero diagonal; mu(a, b) for quadrants
/// a, b in 1..4.
class CoarsePenaltyMatrix {
 public:
  using Matrix = std::array<std::array<double, kNumQuadrants>, kNumQuadrants>;

  CoarsePenaltyMatrix() : mu_{} {}

  explicit CoarsePenaltyMatrix(const Matrix& mu) : mu_(mu) {
    for (std::size_t a = 0; a < kNumQuadrants; ++a) {
      if (mu_[a][a] != 0.0) {
        throw ConfigError("coarse penalty diagonal must be zero (quadrant " +
                          std::to_string(a + 1) + ")");
      }
      for (std::size_t b = 0; b < kNumQuadrants; ++b) {
        if (!(mu_[a][b] >= 0.0) || !std::isfinite(mu_[a][b])) {
          throw ConfigError("coarse penalties must be finite and >= 0");
        }
        if (mu_[a][b] != mu_[b][a]) {
          throw ConfigError("coarse penalty matrix must be symmetric (mu_" +
                            std::to_string(a + 1) + std::to_string(b + 1) +
                            " != mu_" + std::to_string(b + 1) +
                            std::to_string(a + 1) + ")");
        }
      }
    }
  }

  /// Builds from the six pairwise values mu12, mu13, mu14, mu23, mu24, mu34.
  static CoarsePenaltyMatrix from_pairs(double mu12, double mu13, double mu14,
                                        double mu23, double mu24, double mu34) {
    Matrix m{};
    auto set = [&](int a, int b, double v) { m[a][b] = m[b][a] = v; };
    set(0, 1, mu12);
    set(0, 2, mu13);
    set(0, 3, mu14);
    set(1, 2, mu23);
    set(1, 3, mu24);
    set(2, 3, mu34);
    return CoarsePenaltyMatrix(m);
  }

  static CoarsePenaltyMatrix uniform(double v) {
    return from_pairs(v, v, v, v, v, v);
  }

  double operator()(int qa, int qb) const { return mu_.at(qa - 1).at(qb - 1); }
  const Matrix& values() const { return mu_; }

 private:
  Matrix mu_;
};

template <typename T>
struct LossResult {
  double value = 0.0;
  Tensor<T> grad_logits;  // [N, M]
};

namespace detail {

template <typename T>
void check_loss_inputs(const Tensor<T>& probs, std::span<const std::size_t> labels) {
  require_rank(probs.dims(), 2, "loss");
  if (probs.dim(0) != labels.size()) {
    throw ShapeError("loss: " + std::to_string(probs.dim(0)) + " rows vs " +
                     std::to_string(labels.size()) + " labels");
  }
  for (auto l : labels) {
    if (l >= probs.dim(1)) {
      throw ShapeError("loss: label " + std::to_string(l) + " out of range");
    }
  }
}

template <typename T>
std::size_t argmax_row(const Tensor<T>& probs, std::size_t row) {
  const std::size_t m = probs.dim(1);
  const T* p = probs.ptr() + row * m;
  return static_cast<std::size_t>(std::max_element(p, p + m) - p);
}

}  // namespace detail

/// L = -(1/N) sum_i log p_{i,label_i}. `probs` must come from a softmax; the
/// returned gradient is taken at the logits: (p - y) / N.
template <typename T>
LossResult<T> cross_entropy(const Tensor<T>& probs,
                            std::span<const std::size_t> labels) {
  detail::check_loss_inputs(probs, labels);
  const std::size_t n = probs.dim(0), m = probs.dim(1);
  LossResult<T> r{0.0, Tensor<T>(probs.dims())};
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum += std::log(std::max(static_cast<double>(probs[i * m + labels[i]]), kProbClamp));
    for (std::size_t j = 0; j < m; ++j) {
      const double y = j == labels[i] ? 1.0 : 0.0;
      r.grad_logits[i * m + j] =
          static_cast<T>((static_cast<double>(probs[i * m + j]) - y) / n);
    }
  }
  r.value = -sum / static_cast<double>(n);
  return r;
}

/// Cross-entropy with each sample scaled by (1 + mu(q(pred), q(label))) where
/// pred is the argmax of the probabilities. The factor is held constant in
/// the gradient: (1 + mu_i) (p - y) / N.
template <typename T>
LossResult<T> coarse_fine_loss(const Tensor<T>& probs,
                               std::span<const std::size_t> labels,
                               const QuadrantMap& qmap,
                               const CoarsePenaltyMatrix& mu) {
  detail::check_loss_inputs(probs, labels);
  const std::size_t n = probs.dim(0), m = probs.dim(1);
  if (qmap.num_classes() != m) {
    throw ConfigError("quadrant map covers " + std::to_string(qmap.num_classes()) +
                      " classes, probabilities have " + std::to_string(m));
  }
  LossResult<T> r{0.0, Tensor<T>(probs.dims())};
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t pred = detail::argmax_row(probs, i);
    const double factor =
        1.0 + mu(qmap.quadrant(pred), qmap.quadrant(labels[i]));
    sum += factor *
           std::log(std::max(static_cast<double>(probs[i * m + labels[i]]), kProbClamp));
    for (std::size_t j = 0; j < m; ++j) {
      const double y = j == labels[i] ? 1.0 : 0.0;
      r.grad_logits[i * m + j] = static_cast<T>(
          factor * (static_cast<double>(probs[i * m + j]) - y) / n);
    }
  }
  r.value = -sum / static_cast<double>(n);
  return r;
}

}  // namespace avfer
