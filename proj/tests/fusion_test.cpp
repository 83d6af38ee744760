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

#include <fstream>

#include "test_util.hpp"

namespace avfer {
namespace {

EmotionProbVector onehot(std::size_t k) {
  std::vector<double> v(8, 0.0);
  v[k] = 1.0;
  return EmotionProbVector(v);
}

EmotionProbVector random_probs(Rng& rng) {
  std::vector<double> w(8);
  for (auto& v : w) v = rng.uniform(0.0, 1.0);
  return EmotionProbVector::normalized(w);
}

TEST(Fuse, EqualWeightsAverage) {
  Rng rng(1);
  const auto a = random_probs(rng), v = random_probs(rng);
  for (int k = 1; k <= 5; ++k) {
    const auto p = fuse(a, v, {k, k});
    for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(p[i], (a[i] + v[i]) / 2, 1e-15);
  }
}

TEST(Fuse, Idempotent) {
  Rng rng(2);
  const auto q = random_probs(rng);
  const auto p = fuse(q, q, {3, 2});
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(p[i], q[i], 1e-15);
}

TEST(Fuse, TwoToOne) {
  const auto p = fuse(onehot(0), onehot(1), {2, 1});
  EXPECT_DOUBLE_EQ(p[0], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(p[1], 1.0 / 3.0);
  for (std::size_t i = 2; i < 8; ++i) EXPECT_EQ(p[i], 0.0);
}

TEST(Fuse, RatioOutOfRange) {
  EXPECT_THROW(fuse(onehot(0), onehot(1), {0, 1}), ConfigError);
  EXPECT_THROW(fuse(onehot(0), onehot(1), {1, 6}), ConfigError);
}

TEST(Fuse, SimplexSymmetryAndScaling) {
  Rng rng(3);
  for (int t = 0; t < 2000; ++t) {
    const auto a = random_probs(rng), v = random_probs(rng);
    const int m = static_cast<int>(rng.uniform_int(1, 2)), n = static_cast<int>(rng.uniform_int(1, 2));
    const auto p = fuse(a, v, {m, n});
    EXPECT_NEAR(p.sum(), 1.0, 1e-9);
    EXPECT_EQ(p, fuse(v, a, {n, m}));
    const auto scaled = fuse(a, v, {2 * m, 2 * n});
    for (std::size_t i = 0; i < 8; ++i) {
      EXPECT_GE(p[i], 0.0);
      EXPECT_NEAR(p[i], scaled[i], 1e-12);
    }
  }
}

TEST(ProbVector, Validation) {
  EXPECT_THROW(EmotionProbVector(std::vector<double>{0.5, 0.6}), ConfigError);
  EXPECT_THROW(EmotionProbVector(std::vector<double>{-0.1, 1.1}), ConfigError);
  EXPECT_THROW(EmotionProbVector::normalized({0.0, 0.0}), ConfigError);
  EXPECT_EQ(EmotionProbVector::normalized({1.0, 3.0})[1], 0.75);
}

TEST(AverageProbs, IdenticalFramesReturnInput) {
  Rng rng(4);
  const auto q = random_probs(rng);
  const std::vector<EmotionProbVector> frames(8, q);
  const auto p = average_probs(frames);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(p[i], q[i], 1e-15);
}

TEST(SearchRatio, FindsAudioHeavyRatio) {
  // Audio is right on every sample but only barely; visual is wrong on half
  // of them. The fused label is right iff 0.1 m > 0.4 n, i.e. only at (5, 1).
  std::vector<EmotionProbVector> a, v;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < 16; ++i) {
    const std::size_t y = i % 8, other = (y + 1) % 8;
    std::vector<double> pa(8, 0.0), pv(8, 0.0);
    pa[y] = 0.55;
    pa[other] = 0.45;
    if (i < 8) {
      pv[y] = 1.0;
    } else {
      pv[other] = 0.7;
      pv[y] = 0.3;
    }
    a.emplace_back(pa);
    v.emplace_back(pv);
    labels.push_back(y);
  }
  const auto r = search_ratio(a, v, labels, 8);
  EXPECT_EQ(r.best, (FusionRatio{5, 1}));
  EXPECT_EQ(r.best_macro_f1, 1.0);
  EXPECT_EQ(r.table.size(), 25u);
  EXPECT_EQ(r.table.front().ratio, (FusionRatio{1, 1}));
  EXPECT_EQ(r.table.back().ratio, (FusionRatio{5, 5}));
}

TEST(SearchRatio, TiesPreferOneOne) {
  std::vector<EmotionProbVector> a{onehot(0), onehot(1)}, v{onehot(0), onehot(1)};
  const std::vector<std::size_t> labels{0, 1};
  EXPECT_EQ(search_ratio(a, v, labels, 8).best, (FusionRatio{1, 1}));
}

TEST(SearchRatio, Errors) {
  std::vector<EmotionProbVector> a{onehot(0)}, none;
  const std::vector<std::size_t> labels{0, 1}, no_labels;
  EXPECT_THROW(search_ratio(none, none, no_labels, 8), ConfigError);
  EXPECT_THROW(search_ratio(a, a, labels, 8), ConfigError);
}

TEST(ProbDump, RoundTripAndErrors) {
  testing::TempDir dir;
  Rng rng(5);
  std::vector<ProbRecord> recs{{"a", random_probs(rng)}, {"b", random_probs(rng)}};
  write_prob_dump(dir / "p.jsonl", recs);
  const auto back = read_prob_dump(dir / "p.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].id, "b");
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(back[1].probs[i], recs[1].probs[i], 1e-15);
  {
    std::ofstream out(dir / "bad.jsonl");
    out << "{\"id\":\"a\",\"probs\":[1]}\n{\"id\":\n";
  }
  EXPECT_THROW(read_prob_dump(dir / "bad.jsonl"), ParseError);
  EXPECT_THROW(read_prob_dump(dir / "missing.jsonl"), IoError);
}

}  // namespace
}  // namespace avfer
