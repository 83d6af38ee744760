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

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "avfer/core/error.hpp"

namespace avfer {

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct MetricsReport {
  std::vector<ClassScores> per_class;
  double macro_f1 = 0.0;
  /// confusion[true][predicted]
  std::vector<std::vector<std::size_t>> confusion;

  std::size_t sample_count() const {
    std::size_t n = 0;
    for (const auto& row : confusion) {
      for (auto v : row) n += v;
    }
    return n;
  }

  double accuracy() const {
    std::size_t correct = 0;
    for (std::size_t c = 0; c < confusion.size(); ++c) correct += confusion[c][c];
    const std::size_t n = sample_count();
    return n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n);
  }

  nlohmann::json to_json() const {
    nlohmann::json pc = nlohmann::json::array();
    for (const auto& s : per_class) {
      pc.push_back({{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}});
    }
    return {{"per_class", pc}, {"macro_f1", macro_f1}, {"confusion", confusion}};
  }
};

/// Per-class precision, recall and F1 (0 whenever a denominator is 0) and
/// their unweighted mean over all `num_classes`, including classes with no
/// support.
inline MetricsReport macro_f1(std::span<const std::size_t> predictions,
                              std::span<const std::size_t> labels,
                              std::size_t num_classes) {
  if (predictions.empty()) throw ConfigError("macro_f1: no samples");
  if (predictions.size() != labels.size()) {
    throw ConfigError("macro_f1: " + std::to_string(predictions.size()) +
                      " predictions vs " + std::to_string(labels.size()) +
                      " labels");
  }
  MetricsReport r;
  r.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes || predictions[i] >= num_classes) {
      throw ConfigError("macro_f1: class index out of range");
    }
    ++r.confusion[labels[i]][predictions[i]];
  }
  double total = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::size_t tp = r.confusion[c][c], predicted = 0, actual = 0;
    for (std::size_t k = 0; k < num_classes; ++k) {
      predicted += r.confusion[k][c];
      actual += r.confusion[c][k];
    }
    ClassScores s;
    if (predicted > 0) s.precision = static_cast<double>(tp) / predicted;
    if (actual > 0) s.recall = static_cast<double>(tp) / actual;
    if (s.precision + s.recall > 0.0) {
      s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
    }
    total += s.f1;
    r.per_class.push_back(s);
  }
  r.macro_f1 = total / static_cast<double>(num_classes);
  return r;
}

}  // namespace avfer
