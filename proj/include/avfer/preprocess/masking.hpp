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
#include <cstdint>
#include <string>
#include <vector>

#include "avfer/core/error.hpp"
#include "avfer/core/rng.hpp"
#include "avfer/preprocess/spectrogram.hpp"

namespace avfer {

struct MaskSpec {
  std::size_t num_masks = 1;
  std::size_t max_width = 4;  // mel bins
  std::uint64_t seed = 0;
};

/// A masked band of mel rows [start, start + width).
struct MaskBand {
  std::size_t start = 0;
  std::size_t width = 0;
};

/// Draws the bands frequency_mask would apply: per mask, width uniform in
/// {0..max_width}, then start uniform in {0..H-width}.
inline std::vector<MaskBand> draw_mask_bands(std::size_t mel_bins,
                                             const MaskSpec& mask) {
  if (mask.max_width >= mel_bins) {
    throw ConfigError("frequency mask max_width " +
                      std::to_string(mask.max_width) +
                      " must be below the mel bin count " +
                      std::to_string(mel_bins));
  }
  Rng rng(mask.seed);
  std::vector<MaskBand> bands;
  bands.reserve(mask.num_masks);
  for (std::size_t i = 0; i < mask.num_masks; ++i) {
    const auto w = static_cast<std::size_t>(rng.uniform_int(0, mask.max_width));
    const auto f0 = static_cast<std::size_t>(rng.uniform_int(0, mel_bins - w));
    bands.push_back({f0, w});
  }
  return bands;
}

/// Sets the given mel rows to `fill` across all frames.
inline Spectrogram apply_mask_bands(Spectrogram spec,
                                    const std::vector<MaskBand>& bands,
                                    float fill) {
  const std::size_t h = spec.mel_bins(), w = spec.frames();
  for (const auto& b : bands) {
    if (b.start + b.width > h) throw ConfigError("mask band outside spectrogram");
    for (std::size_t r = b.start; r < b.start + b.width; ++r) {
      std::fill_n(spec.values.ptr() + r * w, w, fill);
    }
  }
  return spec;
}

/// Frequency masking with the "silence" fill value ln(1e-6).
inline Spectrogram frequency_mask(Spectrogram spec, const MaskSpec& mask) {
  auto bands = draw_mask_bands(spec.mel_bins(), mask);
  return apply_mask_bands(std::move(spec), bands,
                          static_cast<float>(log_silence()));
}

}  // namespace avfer
