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

std::vector<std::uint8_t> ppm(const std::string& header, std::vector<std::uint8_t> payload) {
  std::vector<std::uint8_t> b(header.begin(), header.end());
  b.insert(b.end(), payload.begin(), payload.end());
  return b;
}

TEST(EqualInterval, Examples) {
  EXPECT_EQ(sample_equal_interval(100, 10),
            (std::vector<std::size_t>{0, 10, 20, 30, 40, 50, 60, 70, 80, 90}));
  EXPECT_EQ(sample_equal_interval(7, 3), (std::vector<std::size_t>{0, 2, 4}));
  EXPECT_EQ(sample_equal_interval(5, 5), (std::vector<std::size_t>{0, 1, 2, 3, 4}));
  EXPECT_EQ(sample_equal_interval(2, 4), (std::vector<std::size_t>{0, 0, 1, 1}));
  EXPECT_THROW(sample_equal_interval(10, 0), ConfigError);
}

TEST(EqualInterval, SortedAndInRange) {
  for (std::size_t total = 1; total < 60; ++total)
    for (std::size_t k = 1; k < 25; ++k) {
      const auto idx = sample_equal_interval(total, k);
      ASSERT_EQ(idx.size(), k);
      EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
      EXPECT_LT(idx.back(), total);
      if (total >= k) {
        EXPECT_EQ(std::adjacent_find(idx.begin(), idx.end()), idx.end());
      }
    }
}

TEST(Ppm, SingleRedPixel) {
  const auto t = parse_ppm(ppm("P6\n1 1\n255\n", {255, 0, 0}));
  EXPECT_EQ(t.dims(), (Dims{3, 1, 1}));
  EXPECT_EQ(t.values(), (std::vector<float>{1.0f, 0.0f, 0.0f}));
}

TEST(Ppm, GrayAndComments) {
  const auto t = parse_ppm(ppm("P6\n# made by hand\n2 2\n255\n", std::vector<std::uint8_t>(12, 128)));
  for (float v : t.data()) EXPECT_EQ(v, 128.0f / 255.0f);
}

TEST(Ppm, ChannelMajorLayout) {
  const auto t = parse_ppm(ppm("P6 2 1 255\n", {1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(t.values(), (std::vector<float>{1 / 255.f, 4 / 255.f, 2 / 255.f, 5 / 255.f,
                                            3 / 255.f, 6 / 255.f}));
}

TEST(Ppm, ErrorsNameTheField) {
  auto message = [](const std::vector<std::uint8_t>& b) {
    try {
      parse_ppm(b);
    } catch (const ParseError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message(ppm("P5\n1 1\n255\n", {0, 0, 0})).find("magic"), std::string::npos);
  EXPECT_NE(message(ppm("P6\n1 1\n65535\n", {0, 0, 0})).find("maxval"), std::string::npos);
  EXPECT_NE(message(ppm("P6\n1 1\n255\n", {0, 0})).find("payload"), std::string::npos);
  EXPECT_NE(message(ppm("P6\nx 1\n255\n", {0, 0, 0})).find("width"), std::string::npos);
}

TEST(Ppm, RoundTrip) {
  testing::TempDir dir;
  Rng rng(1);
  Tensor<float> img({3, 4, 5});
  for (auto& v : img.data()) v = static_cast<float>(rng.uniform_int(0, 255)) / 255.0f;
  write_ppm(dir / "a.ppm", img);
  EXPECT_EQ(read_ppm(dir / "a.ppm"), img);
}

TEST(FrameSequence, LoadsEqualIntervalFrames) {
  testing::TempDir dir;
  for (std::size_t i = 0; i < 10; ++i) {
    write_ppm(dir / frame_file_name(i), Tensor<float>({3, 2, 2}, static_cast<float>(i) / 255.0f));
  }
  EXPECT_EQ(frame_file_name(7), "frame_000007.ppm");
  EXPECT_EQ(count_frames(dir.path()), 10u);
  const auto seq = load_frame_sequence(dir.path(), 4);
  EXPECT_EQ(seq.source_indices, (std::vector<std::size_t>{0, 2, 5, 7}));
  ASSERT_EQ(seq.frames.size(), 4u);
  EXPECT_EQ(seq.frames[2][0], 5.0f / 255.0f);
  EXPECT_THROW(load_frame_sequence(dir / "missing", 2), IoError);
}

}  // namespace
}  // namespace avfer
