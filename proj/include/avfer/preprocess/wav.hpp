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
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "avfer/core/error.hpp"

namespace avfer {

struct AudioClip {
  std::uint32_t sample_rate = 0;
  std::vector<float> samples;  // mono, in [-1, 1]
};

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path,
                             const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

inline std::uint16_t load_u16le(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t load_u32le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void store_u16le(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void store_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  }
}

}  // namespace detail

/// Parses a RIFF/WAVE PCM16 byte stream. Stereo is averaged to mono.
inline AudioClip parse_wav(const std::vector<std::uint8_t>& bytes) {
  using detail::load_u16le;
  using detail::load_u32le;
  if (bytes.size() < 12) throw ParseError("wav: truncated RIFF header", bytes.size());
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0) {
    throw ParseError("wav: missing RIFF magic", 0);
  }
  if (std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw ParseError("wav: missing WAVE form type", 8);
  }

  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* hdr = bytes.data() + pos;
    const std::uint32_t len = load_u32le(hdr + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (len < 16 || body + 16 > bytes.size()) {
        throw ParseError("wav: truncated fmt chunk", pos);
      }
      const std::uint16_t tag = load_u16le(bytes.data() + body);
      if (tag != 1) {
        throw ParseError("wav: format tag " + std::to_string(tag) +
                             " is not PCM (1)",
                         body);
      }
      channels = load_u16le(bytes.data() + body + 2);
      rate = load_u32le(bytes.data() + body + 4);
      bits = load_u16le(bytes.data() + body + 14);
      if (bits != 16) {
        throw UnsupportedFormatError("wav: " + std::to_string(bits) +
                                     "-bit samples are not supported (PCM16 only)");
      }
      if (channels != 1 && channels != 2) {
        throw UnsupportedFormatError("wav: " + std::to_string(channels) +
                                     " channels are not supported");
      }
      if (rate == 0) throw ParseError("wav: zero sample rate", body + 4);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      if (!have_fmt) throw ParseError("wav: data chunk before fmt chunk", pos);
      if (body + len > bytes.size()) {
        throw ParseError("wav: data chunk runs past end of file", pos + 4);
      }
      const std::size_t frame_bytes = 2u * channels;
      const std::size_t frames = len / frame_bytes;
      if (frames == 0) throw ParseError("wav: empty data chunk", pos);
      AudioClip clip{rate, std::vector<float>(frames)};
      for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (std::size_t ch = 0; ch < channels; ++ch) {
          const auto raw = static_cast<std::int16_t>(
              load_u16le(bytes.data() + body + f * frame_bytes + 2 * ch));
          acc += raw / 32768.0;
        }
        clip.samples[f] = static_cast<float>(acc / channels);
      }
      return clip;
    }
    pos = body + len + (len & 1u);
  }
  throw ParseError(have_fmt ? "wav: no data chunk" : "wav: no fmt chunk",
                   std::min(pos, bytes.size()));
}

inline AudioClip read_wav(const std::filesystem::path& path) {
  try {
    return parse_wav(detail::read_file_bytes(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.detail(), e.offset());
  }
}

/// Mono PCM16 encoding; samples are clamped to [-1, 1) before quantizing.
inline std::vector<std::uint8_t> encode_wav(const AudioClip& clip) {
  using detail::store_u16le;
  using detail::store_u32le;
  const auto data_len = static_cast<std::uint32_t>(clip.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_len);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  store_u32le(out, 36 + data_len);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  store_u32le(out, 16);
  store_u16le(out, 1);
  store_u16le(out, 1);
  store_u32le(out, clip.sample_rate);
  store_u32le(out, clip.sample_rate * 2);
  store_u16le(out, 2);
  store_u16le(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  store_u32le(out, data_len);
  for (float s : clip.samples) {
    const double q = std::round(static_cast<double>(s) * 32768.0);
    const auto v = static_cast<std::int16_t>(std::clamp(q, -32768.0, 32767.0));
    store_u16le(out, static_cast<std::uint16_t>(v));
  }
  return out;
}

inline void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  detail::write_file_bytes(path, encode_wav(clip));
}

}  // namespace avfer
