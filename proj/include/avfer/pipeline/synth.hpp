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
#include <filesystem>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "avfer/core/rng.hpp"
#include "avfer/pipeline/manifest.hpp"
#include "avfer/preprocess/frames.hpp"
#include "avfer/preprocess/wav.hpp"

namespace avfer {

using ClassPair = std::pair<std::size_t, std::size_t>;

/// Desk-scale synthetic corpus description.
///
/// Audio signature of class c by c % 4: a tone, a rising chirp, a falling
/// chirp or broadband noise; steady for c < 4 and pulsed at 12.5 Hz for
/// c >= 4.
/// Visual signature of class c: one of four colours (c % 4) drawn as moving
/// stripes, horizontal for c < 4 and vertical for c >= 4.
/// For a pair (a, b) listed in `audio_confused_pairs`, class b reuses class
/// a's audio signature (audio cannot tell them apart); likewise for visual.
struct SynthSpec {
  std::size_t classes = kNumClasses;
  std::size_t samples_per_class = 4;
  std::uint32_t sample_rate = 16000;
  double clip_seconds = 0.3;
  std::size_t frames_per_sample = 16;
  std::size_t image_size = 16;
  double audio_noise = 0.02;
  double visual_noise = 0.05;
  std::vector<ClassPair> audio_confused_pairs;
  std::vector<ClassPair> visual_confused_pairs;
  std::string split = "train";

  void validate() const {
    if (classes == 0 || classes > kNumClasses) {
      throw ConfigError("synth: classes must be in 1..8");
    }
    if (samples_per_class < 2) throw ConfigError("synth: samples_per_class must be >= 2");
    if (frames_per_sample == 0) throw ConfigError("synth: frames_per_sample must be >= 1");
    if (image_size < 4) throw ConfigError("synth: image_size must be >= 4");
    if (!(clip_seconds > 0.0)) throw ConfigError("synth: clip_seconds must be > 0");
    if (audio_noise < 0.0 || visual_noise < 0.0) {
      throw ConfigError("synth: noise levels must be >= 0");
    }
    for (const auto* pairs : {&audio_confused_pairs, &visual_confused_pairs}) {
      for (const auto& [a, b] : *pairs) {
        if (a >= classes || b >= classes || a == b) {
          throw ConfigError("synth: invalid confused pair (" + std::to_string(a) +
                            "," + std::to_string(b) + ")");
        }
      }
    }
  }
};

namespace detail {

inline std::size_t signature_of(std::size_t cls, const std::vector<ClassPair>& pairs) {
  for (const auto& [a, b] : pairs) {
    if (cls == b) return a;
  }
  return cls;
}

inline AudioClip synth_audio(std::size_t signature, const SynthSpec& spec, Rng& rng) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const std::size_t len =
      static_cast<std::size_t>(std::lround(spec.clip_seconds * spec.sample_rate));
  const double sr = spec.sample_rate;
  const double nyquist = sr / 2.0;
  const bool pulsed = signature >= 4;
  const double jitter = 1.0 + 0.05 * rng.uniform(-1.0, 1.0);

  struct Partial {
    double hz, sweep, amp, phase;
  };
  std::vector<Partial> partials;
  double burst = 0.0;
  const double span = 2400.0 / spec.clip_seconds;
  switch (signature % 4) {
    case 0:  // steady tone
      partials.push_back({500.0 * jitter, 0.0, 0.3, 0.0});
      break;
    case 1:  // rising chirp
      partials.push_back({300.0 * jitter, span, 0.3, 0.0});
      break;
    case 2:  // falling chirp
      partials.push_back({2700.0 * jitter, -span, 0.3, 0.0});
      break;
    default:  // broadband noise
      burst = 0.15;
      break;
  }
  for (auto& p : partials) p.phase = rng.uniform(0.0, two_pi);
  const double pulse_rate = 12.5;
  const double pulse_phase = rng.uniform();

  AudioClip clip{spec.sample_rate, std::vector<float>(len)};
  for (std::size_t i = 0; i < len; ++i) {
    const double t = static_cast<double>(i) / sr;
    double s = 0.0;
    for (const auto& p : partials) {
      if (p.hz + p.sweep * t >= nyquist) continue;
      s += p.amp * std::sin(two_pi * (p.hz * t + 0.5 * p.sweep * t * t) + p.phase);
    }
    if (burst > 0.0) s += burst * rng.normal();
    if (pulsed) {
      const double cyc = t * pulse_rate + pulse_phase;
      s *= (cyc - std::floor(cyc)) < 0.5 ? 1.0 : 0.05;
    }
    s += spec.audio_noise * rng.normal();
    clip.samples[i] = static_cast<float>(std::clamp(s, -1.0, 32767.0 / 32768.0));
  }
  return clip;
}

inline std::vector<Tensor<float>> synth_frames(std::size_t signature,
                                               const SynthSpec& spec, Rng& rng) {
  static constexpr std::array<std::array<double, 3>, 4> kPalette{{
      {0.9, 0.2, 0.2},
      {0.2, 0.8, 0.3},
      {0.2, 0.3, 0.9},
      {0.9, 0.85, 0.2},
  }};
  const auto& colour = kPalette[signature % 4];
  const bool vertical = signature >= 4;
  const std::size_t s = spec.image_size, period = 4;
  const auto offset = static_cast<std::size_t>(rng.uniform_int(0, period - 1));
  std::vector<Tensor<float>> frames;
  for (std::size_t f = 0; f < spec.frames_per_sample; ++f) {
    Tensor<float> img({3, s, s});
    for (std::size_t y = 0; y < s; ++y) {
      for (std::size_t x = 0; x < s; ++x) {
        const std::size_t coord = (vertical ? x : y) + f + offset;
        const double level = (coord % period) < period / 2 ? 1.0 : 0.3;
        for (std::size_t c = 0; c < 3; ++c) {
          const double v = colour[c] * level + spec.visual_noise * rng.normal();
          img[(c * s + y) * s + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    }
    frames.push_back(std::move(img));
  }
  return frames;
}

}  // namespace detail

inline std::string synth_sample_id(const SynthSpec& spec, std::size_t cls,
                                   std::size_t index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_c%zu_%03zu", spec.split.c_str(), cls, index);
  return buf;
}

/// Writes WAV clips, PPM frame sequences and `<split>.jsonl` under `out_dir`.
/// Output bytes depend only on (spec, seed).
inline DatasetManifest generate_synthetic(const SynthSpec& spec,
                                          const std::filesystem::path& out_dir,
                                          std::uint64_t seed) {
  namespace fs = std::filesystem;
  spec.validate();
  std::error_code ec;
  fs::create_directories(out_dir / "audio", ec);
  if (ec) throw IoError("cannot create '" + (out_dir / "audio").string() + "': " + ec.message());
  DatasetManifest manifest;
  for (std::size_t cls = 0; cls < spec.classes; ++cls) {
    for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
      ManifestEntry e;
      e.id = synth_sample_id(spec, cls, i);
      e.label = cls;
      e.split = spec.split;
      e.audio_path = out_dir / "audio" / (e.id + ".wav");
      e.frames_dir = out_dir / "frames" / e.id;
      Rng rng(mix_seed(seed, stable_hash(e.id)));
      write_wav(e.audio_path,
                detail::synth_audio(detail::signature_of(cls, spec.audio_confused_pairs),
                                    spec, rng));
      fs::create_directories(e.frames_dir, ec);
      if (ec) throw IoError("cannot create '" + e.frames_dir.string() + "': " + ec.message());
      const auto frames = detail::synth_frames(
          detail::signature_of(cls, spec.visual_confused_pairs), spec, rng);
      for (std::size_t f = 0; f < frames.size(); ++f) {
        write_ppm(e.frames_dir / frame_file_name(f), frames[f]);
      }
      manifest.entries.push_back(std::move(e));
    }
  }
  save_manifest(out_dir / (spec.split + ".jsonl"), manifest);
  return manifest;
}

}  // namespace avfer
