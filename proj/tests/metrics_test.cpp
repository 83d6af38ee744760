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

#include <numeric>

#include "test_util.hpp"

namespace avfer {
namespace {

// Independent recount: scans every (pred, label) pair once per class.
std::vector<ClassScores> brute_force(const std::vector<std::size_t>& pred,
                                     const std::vector<std::size_t>& label, std::size_t m) {
  std::vector<ClassScores> out(m);
  for (std::size_t c = 0; c < m; ++c) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (pred[i] == c && label[i] == c) ++tp;
      if (pred[i] == c && label[i] != c) ++fp;
      if (pred[i] != c && label[i] == c) ++fn;
    }
    auto& s = out[c];
    s.precision = tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0;
    s.recall = tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0;
    s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall)
                                      : 0.0;
  }
  return out;
}

TEST(MacroF1, PerfectPredictions) {
  std::vector<std::size_t> y{0, 1, 2, 3, 4, 5, 6, 7, 0, 1};
  const auto r = macro_f1(y, y, 8);
  EXPECT_EQ(r.macro_f1, 1.0);
  EXPECT_EQ(r.accuracy(), 1.0);
}

TEST(MacroF1, TwoClassesAllPredictedZero) {
  const std::vector<std::size_t> pred{0, 0, 0, 0}, label{0, 0, 1, 1};
  const auto r = macro_f1(pred, label, 2);
  EXPECT_DOUBLE_EQ(r.per_class[0].f1, 2.0 / 3.0);
  EXPECT_EQ(r.per_class[1].f1, 0.0);
  EXPECT_DOUBLE_EQ(r.macro_f1, 1.0 / 3.0);
}

TEST(MacroF1, MatchesBruteForceOn1000Instances) {
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = rng.uniform_int(1, 8), n = rng.uniform_int(1, 200);
    std::vector<std::size_t> pred(n), label(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = rng.uniform_int(0, m - 1);
      label[i] = rng.uniform_int(0, m - 1);
    }
    const auto r = macro_f1(pred, label, m);
    const auto oracle = brute_force(pred, label, m);
    double macro = 0;
    for (std::size_t c = 0; c < m; ++c) {
      ASSERT_EQ(r.per_class[c].precision, oracle[c].precision);
      ASSERT_EQ(r.per_class[c].recall, oracle[c].recall);
      ASSERT_EQ(r.per_class[c].f1, oracle[c].f1);
      macro += oracle[c].f1;
      std::size_t row = 0, support = 0;
      for (auto v : r.confusion[c]) row += v;
      for (auto l : label) support += l == c;
      ASSERT_EQ(row, support);
    }
    ASSERT_EQ(r.macro_f1, macro / static_cast<double>(m));
  }
}

TEST(MacroF1, InvariantUnderRelabeling) {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::size_t> perm(8);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = 8; i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform_int(0, i - 1)]);
    std::vector<std::size_t> pred(60), label(60), pp(60), pl(60);
    for (std::size_t i = 0; i < 60; ++i) {
      pred[i] = rng.uniform_int(0, 7);
      label[i] = rng.uniform_int(0, 7);
      pp[i] = perm[pred[i]];
      pl[i] = perm[label[i]];
    }
    EXPECT_NEAR(macro_f1(pred, label, 8).macro_f1, macro_f1(pp, pl, 8).macro_f1, 1e-15);
  }
}

TEST(MacroF1, ZeroSupportClassesCountAsZero) {
  const std::vector<std::size_t> y{0, 1};
  EXPECT_DOUBLE_EQ(macro_f1(y, y, 8).macro_f1, 2.0 / 8.0);
}

TEST(MacroF1, Errors) {
  const std::vector<std::size_t> empty, one{0}, two{0, 1}, bad{9};
  EXPECT_THROW(macro_f1(empty, empty, 8), ConfigError);
  EXPECT_THROW(macro_f1(one, two, 8), ConfigError);
  EXPECT_THROW(macro_f1(bad, one, 8), ConfigError);
}

TEST(MacroF1, JsonShape) {
  const std::vector<std::size_t> y{0, 1};
  const auto j = macro_f1(y, y, 2).to_json();
  EXPECT_EQ(j["per_class"].size(), 2u);
  EXPECT_TRUE(j["per_class"][0].contains("precision"));
  EXPECT_EQ(j["confusion"][1][1], 1);
  EXPECT_EQ(j["macro_f1"], 1.0);
}

}  // namespace
}  // namespace avfer
