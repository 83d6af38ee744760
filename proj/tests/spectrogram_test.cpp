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

#include <numbers>

#include "test_util.hpp"

namespace avfer {
namespace {

AudioClip tone(double hz, std::size_t n, std::uint32_t sr = 16000) {
  AudioClip c{sr, std::vector<float>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    c.samples[i] = static_cast<float>(0.5 * std::sin(2 * std::numbers::pi * hz * i / sr));
  }
  return c;
}

TEST(Stft, FrameCountAndBins) {
  const auto p = stft_power(AudioClip{16000, std::vector<float>(16000)}, 25, 10);
  EXPECT_EQ(p.dim(0), 257u);
  EXPECT_EQ(p.dim(1), 1u + (16000 - 400) / 160);
}

TEST(Stft, ShortClipPadsToOneFrame) {
  const auto p = stft_power(AudioClip{16000, std::vector<float>(100, 0.1f)}, 25, 10);
  EXPECT_EQ(p.dim(1), 1u);
  EXPECT_GT(p[0], 0.0f);
}

TEST(Stft, ConstantSignalConcentratesAtDc) {
  // A 400-sample Hann window zero-padded to 512 has a main lobe of
  // 2 * 512 / 400 = 2.56 bins on each side; past it the sidelobes sit more
  // than 31 dB down.
  const auto p = stft_power(AudioClip{16000, std::vector<float>(2000, 1.0f)}, 25, 10);
  const std::size_t frames = p.dim(1);
  for (std::size_t f = 0; f < frames; ++f) {
    EXPECT_NEAR(p[f], 200.0 * 200.0, 1.0);
    for (std::size_t k = 1; k < p.dim(0); ++k) {
      EXPECT_GT(p[f], p[k * frames + f]) << "bin " << k;
      if (k >= 3) {
        EXPECT_GE(p[f], 100.0f * p[k * frames + f]) << "bin " << k;
      }
    }
  }
}

TEST(Stft, BinCenteredSinePeaksAtItsBin) {
  // fft_size 512 at 16 kHz: bin k sits at k * 31.25 Hz.
  for (std::size_t k : {8, 20, 64, 200}) {
    const auto p = stft_power(tone(k * 31.25, 4000), 25, 10);
    const std::size_t frames = p.dim(1);
    for (std::size_t f = 0; f < frames; ++f) {
      std::size_t best = 0;
      for (std::size_t b = 0; b < p.dim(0); ++b) {
        if (p[b * frames + f] > p[best * frames + f]) best = b;
      }
      EXPECT_EQ(best, k);
    }
  }
}

TEST(Stft, SilenceIsZero) {
  const auto p = stft_power(AudioClip{16000, std::vector<float>(1600)}, 25, 10);
  for (float v : p.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Mel, ZeroPowerGivesLogFloor) {
  const auto s = mel_spectrogram(Tensor<float>({257, 5}), 16000, 64);
  EXPECT_EQ(s.values.dims(), (Dims{1, 1, 64, 5}));
  for (float v : s.values.data()) EXPECT_EQ(v, static_cast<float>(std::log(1e-6)));
}

TEST(Mel, FilterbankRowsPositiveAndCoverage) {
  const auto fb = mel_filterbank(512, 16000, 64);
  const std::size_t bins = 257;
  for (std::size_t m = 0; m < 64; ++m) {
    double row = 0;
    for (std::size_t k = 0; k < bins; ++k) {
      EXPECT_GE(fb[m * bins + k], 0.0);
      row += fb[m * bins + k];
    }
    EXPECT_GT(row, 0.0) << m;
  }
  // Every bin strictly between DC and Nyquist lies inside some triangle.
  for (std::size_t k = 1; k + 1 < bins; ++k) {
    double col = 0;
    for (std::size_t m = 0; m < 64; ++m) col += fb[m * bins + k];
    EXPECT_GT(col, 0.0) << "bin " << k;
  }
}

TEST(Mel, FilterbankMatchesHtkTriangles) {
  // Independent recomputation of one filter from the HTK formula.
  const double mel_max = 2595.0 * std::log10(1.0 + 8000.0 / 700.0);
  auto edge = [&](double i) { return 700.0 * (std::pow(10.0, mel_max * i / 65.0 / 2595.0) - 1.0); };
  const auto fb = mel_filterbank(512, 16000, 64);
  const std::size_t m = 30;
  for (std::size_t k = 0; k < 257; ++k) {
    const double hz = k * 31.25, lo = edge(m), mid = edge(m + 1), hi = edge(m + 2);
    double expect = 0;
    if (hz > lo && hz <= mid) expect = (hz - lo) / (mid - lo);
    if (hz > mid && hz < hi) expect = (hi - hz) / (hi - mid);
    EXPECT_NEAR(fb[m * 257 + k], expect, 1e-9);
  }
}

TEST(Mel, Errors) {
  EXPECT_THROW(mel_spectrogram(Tensor<float>({257, 2}), 16000, 300), ConfigError);
  EXPECT_THROW(mel_filterbank(512, 16000, 4), ConfigError);
  SpectrogramConfig cfg;
  EXPECT_THROW(audio_to_mel(AudioClip{8000, std::vector<float>(800)}, cfg), ConfigError);
}

TEST(Mel, DoublingPowerNeverDecreases) {
  Rng rng(3);
  auto p = testing::random_tensor(rng, {257, 6}, 0.0, 2.0);
  const auto a = mel_spectrogram(p, 16000, 64);
  p *= 2.0f;
  const auto b = mel_spectrogram(p, 16000, 64);
  for (std::size_t i = 0; i < a.values.size(); ++i) EXPECT_GE(b.values[i], a.values[i]);
}

TEST(Mel, HeightIndependentOfClipLength) {
  SpectrogramConfig cfg;
  for (std::size_t n : {10, 400, 1234, 16000}) {
    const auto s = audio_to_mel(tone(440, n), cfg);
    EXPECT_EQ(s.mel_bins(), 64u);
    EXPECT_TRUE(s.values.all_finite());
  }
}

}  // namespace
}  // namespace avfer
