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

#include <fftw3.h>

#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "avfer/core/error.hpp"
#include "avfer/core/tensor.hpp"
#include "avfer/preprocess/wav.hpp"

namespace avfer {

/// Additive floor inside the log compression; ln(kLogFloor) is "silence".
inline constexpr double kLogFloor = 1e-6;

inline double log_silence() { return std::log(kLogFloor); }

struct Spectrogram {
  Tensor<float> values;  // [1, 1, mel_bins, frames] log-mel energies

  std::size_t mel_bins() const { return values.dim(2); }
  std::size_t frames() const { return values.dim(3); }
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

inline std::size_t samples_for_ms(std::uint32_t sample_rate, double ms) {
  return static_cast<std::size_t>(std::lround(sample_rate * ms / 1000.0));
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

namespace detail {

struct FftwPlanDeleter {
  void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};
struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

}  // namespace detail

/// One-sided power spectrum with a periodic Hann window, zero-padded to the
/// next power of two. Returns [fft_size/2 + 1, frames]. Clips shorter than a
/// window are zero-padded to one frame.
inline Tensor<float> stft_power(const AudioClip& clip, double window_ms,
                                double hop_ms) {
  const std::size_t win = samples_for_ms(clip.sample_rate, window_ms);
  const std::size_t hop = samples_for_ms(clip.sample_rate, hop_ms);
  if (win < 2) throw ConfigError("stft_power: window must span >= 2 samples");
  if (hop < 1) throw ConfigError("stft_power: hop must span >= 1 sample");
  const std::size_t fft_size = next_pow2(win);
  const std::size_t bins = fft_size / 2 + 1;
  const std::size_t len = clip.samples.size();
  const std::size_t frames = len >= win ? 1 + (len - win) / hop : 1;

  std::unique_ptr<double, detail::FftwFree> in(
      static_cast<double*>(fftw_malloc(sizeof(double) * fft_size)));
  std::unique_ptr<fftw_complex, detail::FftwFree> out(static_cast<fftw_complex*>(
      fftw_malloc(sizeof(fftw_complex) * bins)));
  std::unique_ptr<fftw_plan_s, detail::FftwPlanDeleter> plan(
      fftw_plan_dft_r2c_1d(static_cast<int>(fft_size), in.get(), out.get(),
                           FFTW_ESTIMATE));
  if (!plan) throw Error("stft_power: FFTW plan creation failed");

  std::vector<double> window(win);
  for (std::size_t i = 0; i < win; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / win);
  }

  Tensor<float> power({bins, frames});
  for (std::size_t f = 0; f < frames; ++f) {
    const std::size_t start = f * hop;
    for (std::size_t i = 0; i < fft_size; ++i) {
      const std::size_t idx = start + i;
      in.get()[i] =
          (i < win && idx < len) ? clip.samples[idx] * window[i] : 0.0;
    }
    fftw_execute(plan.get());
    for (std::size_t k = 0; k < bins; ++k) {
      const double re = out.get()[k][0], im = out.get()[k][1];
      power[k * frames + f] = static_cast<float>(re * re + im * im);
    }
  }
  return power;
}

/// HTK-scale triangular filters spanning 0 .. sample_rate/2.
/// Returns weights [mel_bins, fft_size/2 + 1].
inline Tensor<double> mel_filterbank(std::size_t fft_size,
                                     std::uint32_t sample_rate,
                                     std::size_t mel_bins) {
  const std::size_t bins = fft_size / 2 + 1;
  if (mel_bins < 8) {
    throw ConfigError("mel_filterbank: need at least 8 mel bins, got " +
                      std::to_string(mel_bins));
  }
  if (mel_bins > bins) {
    throw ConfigError("mel_filterbank: " + std::to_string(mel_bins) +
                      " mel bins exceed " + std::to_string(bins) +
                      " frequency bins");
  }
  const double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(mel_bins + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_max * static_cast<double>(i) / (mel_bins + 1));
  }
  Tensor<double> fb({mel_bins, bins});
  for (std::size_t m = 0; m < mel_bins; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    double row = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
      const double hz = static_cast<double>(k) * sample_rate / fft_size;
      double wgt = 0.0;
      if (hz > lo && hz <= mid) {
        wgt = (hz - lo) / (mid - lo);
      } else if (hz > mid && hz < hi) {
        wgt = (hi - hz) / (hi - mid);
      }
      fb[m * bins + k] = wgt;
      row += wgt;
    }
    if (row <= 0.0) {
      throw ConfigError("mel_filterbank: filter " + std::to_string(m) +
                        " covers no FFT bin; use fewer mel bins");
    }
  }
  return fb;
}

/// power [freq_bins, frames] -> ln(mel energies + 1e-6) as [1,1,mel,frames].
inline Spectrogram mel_spectrogram(const Tensor<float>& power,
                                   std::uint32_t sample_rate,
                                   std::size_t mel_bins) {
  require_rank(power.dims(), 2, "mel_spectrogram");
  const std::size_t bins = power.dim(0), frames = power.dim(1);
  if (mel_bins > bins) {
    throw ConfigError("mel_spectrogram: " + std::to_string(mel_bins) +
                      " mel bins exceed " + std::to_string(bins) +
                      " frequency bins");
  }
  const Tensor<double> fb = mel_filterbank((bins - 1) * 2, sample_rate, mel_bins);
  Spectrogram spec{Tensor<float>({1, 1, mel_bins, frames})};
  for (std::size_t m = 0; m < mel_bins; ++m) {
    for (std::size_t f = 0; f < frames; ++f) {
      double e = 0.0;
      for (std::size_t k = 0; k < bins; ++k) {
        const double wgt = fb[m * bins + k];
        if (wgt != 0.0) e += wgt * power[k * frames + f];
      }
      spec.values[m * frames + f] = static_cast<float>(std::log(e + kLogFloor));
    }
  }
  return spec;
}

struct SpectrogramConfig {
  std::uint32_t sample_rate = 16000;
  double window_ms = 25.0;
  double hop_ms = 10.0;
  std::size_t mel_bins = 64;
};

/// Full audio front-end. Rejects clips whose rate differs from the config.
inline Spectrogram audio_to_mel(const AudioClip& clip,
                                const SpectrogramConfig& cfg) {
  if (clip.sample_rate != cfg.sample_rate) {
    throw ConfigError("audio sample rate " + std::to_string(clip.sample_rate) +
                      " Hz does not match the configured " +
                      std::to_string(cfg.sample_rate) +
                      " Hz (resampling is not supported)");
  }
  return mel_spectrogram(stft_power(clip, cfg.window_ms, cfg.hop_ms),
                         cfg.sample_rate, cfg.mel_bins);
}

}  // namespace avfer
