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
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "avfer/core/error.hpp"
#include "avfer/metrics.hpp"

namespace avfer {

/// Probability vector on the simplex: entries >= 0, sum 1 within 1e-9.
class EmotionProbVector {
 public:
  static constexpr double kSumTolerance = 1e-9;

  EmotionProbVector() = default;

  explicit EmotionProbVector(std::vector<double> probs) : p_(std::move(probs)) {
    if (p_.empty()) throw ConfigError("probability vector is empty");
    double sum = 0.0;
    for (double v : p_) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw ConfigError("probability entries must be finite and >= 0");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) {
      throw ConfigError("probabilities sum to " + std::to_string(sum) +
                        ", not 1");
    }
  }

  /// Divides nonnegative weights by their sum (e.g. single-precision softmax
  /// output, or a mean of vectors).
  static EmotionProbVector normalized(std::vector<double> weights) {
    double sum = 0.0;
    for (double v : weights) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw ConfigError("probability weights must be finite and >= 0");
      }
      sum += v;
    }
    if (!(sum > 0.0)) throw ConfigError("probability weights sum to zero");
    for (double& v : weights) v /= sum;
    return EmotionProbVector(std::move(weights));
  }

  std::size_t size() const { return p_.size(); }
  double operator[](std::size_t i) const { return p_[i]; }
  const std::vector<double>& values() const { return p_; }

  std::size_t argmax() const {
    return static_cast<std::size_t>(std::max_element(p_.begin(), p_.end()) -
                                    p_.begin());
  }

  double sum() const { return std::accumulate(p_.begin(), p_.end(), 0.0); }

  friend bool operator==(const EmotionProbVector&, const EmotionProbVector&) = default;

 private:
  std::vector<double> p_;
};

/// Integer modality weights, each in 1..5.
struct FusionRatio {
  int m = 1;  // audio
  int n = 1;  // visual

  void validate() const {
    if (m < 1 || m > 5 || n < 1 || n > 5) {
      throw ConfigError("fusion ratio (" + std::to_string(m) + "," +
                        std::to_string(n) + ") outside 0 < m,n < 6");
    }
  }

  friend bool operator==(const FusionRatio&, const FusionRatio&) = default;
};

/// P = (m * P_a + n * P_v) / (m + n).
inline EmotionProbVector fuse(const EmotionProbVector& audio,
                              const EmotionProbVector& visual,
                              FusionRatio ratio) {
  ratio.validate();
  if (audio.size() != visual.size()) {
    throw ShapeError("fuse: probability vectors differ in length");
  }
  const double m = ratio.m, n = ratio.n, total = m + n;
  std::vector<double> out(audio.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (m * audio[i] + n * visual[i]) / total;
  }
  // A convex combination of simplex points; validation guards the invariant.
  return EmotionProbVector(std::move(out));
}

/// Clip-level probabilities: mean of the per-frame vectors, renormalized.
inline EmotionProbVector average_probs(std::span<const EmotionProbVector> frames) {
  if (frames.empty()) throw ConfigError("average_probs: no frames");
  std::vector<double> acc(frames.front().size(), 0.0);
  for (const auto& f : frames) {
    if (f.size() != acc.size()) throw ShapeError("average_probs: length mismatch");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += f[i];
  }
  for (double& v : acc) v /= static_cast<double>(frames.size());
  return EmotionProbVector::normalized(std::move(acc));
}

struct RatioScore {
  FusionRatio ratio;
  double macro_f1 = 0.0;
};

struct RatioSearchResult {
  FusionRatio best;
  double best_macro_f1 = 0.0;
  std::vector<RatioScore> table;  // all 25 (m, n), m-major

  nlohmann::json to_json() const {
    nlohmann::json t = nlohmann::json::array();
    for (const auto& s : table) {
      t.push_back({{"m", s.ratio.m}, {"n", s.ratio.n}, {"macro_f1", s.macro_f1}});
    }
    return {{"best", {{"m", best.m}, {"n", best.n}}},
            {"best_macro_f1", best_macro_f1},
            {"table", t}};
  }
};

/// Evaluates macro F1 of argmax(fuse(...)) for every (m, n) in {1..5}^2 and
/// returns the best; ties go to the smallest m + n, then the smallest m.
inline RatioSearchResult search_ratio(std::span<const EmotionProbVector> audio,
                                      std::span<const EmotionProbVector> visual,
                                      std::span<const std::size_t> labels,
                                      std::size_t num_classes) {
  if (audio.empty()) throw ConfigError("search_ratio: empty validation set");
  if (audio.size() != visual.size() || audio.size() != labels.size()) {
    throw ConfigError("search_ratio: audio, visual and label counts differ");
  }
  RatioSearchResult result;
  bool have_best = false;
  std::vector<std::size_t> preds(labels.size());
  for (int m = 1; m <= 5; ++m) {
    for (int n = 1; n <= 5; ++n) {
      const FusionRatio r{m, n};
      for (std::size_t i = 0; i < labels.size(); ++i) {
        preds[i] = fuse(audio[i], visual[i], r).argmax();
      }
      const double f1 = macro_f1(preds, labels, num_classes).macro_f1;
      result.table.push_back({r, f1});
      const bool better =
          !have_best || f1 > result.best_macro_f1 ||
          (f1 == result.best_macro_f1 &&
           (m + n < result.best.m + result.best.n ||
            (m + n == result.best.m + result.best.n && m < result.best.m)));
      if (better) {
        result.best = r;
        result.best_macro_f1 = f1;
        have_best = true;
      }
    }
  }
  return result;
}

struct ProbRecord {
  std::string id;
  EmotionProbVector probs;
};

/// JSONL lines of the form {"id": string, "probs": [reals]}.
inline void write_prob_dump(const std::filesystem::path& path,
                            std::span<const ProbRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  for (const auto& r : records) {
    out << nlohmann::json{{"id", r.id}, {"probs", r.probs.values()}}.dump() << '\n';
  }
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

inline std::vector<ProbRecord> read_prob_dump(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<ProbRecord> records;
  std::string line;
  std::size_t line_no = 0, offset = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t line_offset = offset;
    offset += line.size() + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      records.push_back({j.at("id").get<std::string>(),
                         EmotionProbVector::normalized(
                             j.at("probs").get<std::vector<double>>())});
    } catch (const std::exception& e) {
      throw ParseError(path.string() + " line " + std::to_string(line_no) +
                           ": " + e.what(),
                       line_offset);
    }
  }
  return records;
}

}  // namespace avfer
