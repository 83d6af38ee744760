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

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "avfer/core/error.hpp"
#include "avfer/core/tensor.hpp"
#include "avfer/preprocess/wav.hpp"

namespace avfer {

/// Indices floor(i * total / k) for i in [0, k). Repeats when total < k.
inline std::vector<std::size_t> sample_equal_interval(std::size_t total_frames,
                                                      std::size_t k) {
  if (k == 0) throw ConfigError("sample_equal_interval: k must be >= 1");
  if (total_frames == 0) {
    throw ConfigError("sample_equal_interval: no frames to sample from");
  }
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i * total_frames / k;
  return idx;
}

namespace detail {

class PpmHeaderReader {
 public:
  explicit PpmHeaderReader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

  std::size_t pos() const { return pos_; }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t read_uint(const char* field) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1u << 20) throw ParseError(std::string("ppm: ") + field + " too large", start);
      ++pos_;
    }
    if (pos_ == start) {
      throw ParseError(std::string("ppm: missing or invalid ") + field, start);
    }
    return v;
  }

  void expect_single_space(const char* after) {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw ParseError(std::string("ppm: expected whitespace after ") + after,
                       pos_);
    }
    ++pos_;
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 2;
};

}  // namespace detail

/// Binary PPM (P6, maxval 255) -> [3,H,W] in [0,1], channel-major.
inline Tensor<float> parse_ppm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw ParseError("ppm: magic is not P6", 0);
  }
  detail::PpmHeaderReader rd(bytes);
  const std::size_t width = rd.read_uint("width");
  const std::size_t height = rd.read_uint("height");
  const std::size_t maxval_pos = rd.pos();
  const std::size_t maxval = rd.read_uint("maxval");
  if (maxval != 255) {
    throw ParseError("ppm: maxval " + std::to_string(maxval) +
                         " is not 255",
                     maxval_pos);
  }
  rd.expect_single_space("maxval");
  if (width == 0 || height == 0) throw ParseError("ppm: zero width or height", 2);
  const std::size_t payload = width * height * 3;
  if (bytes.size() - rd.pos() < payload) {
    throw ParseError("ppm: payload has " + std::to_string(bytes.size() - rd.pos()) +
                         " bytes, expected " + std::to_string(payload),
                     bytes.size());
  }
  Tensor<float> img({3, height, width});
  const std::uint8_t* px = bytes.data() + rd.pos();
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        img[(c * height + y) * width + x] =
            static_cast<float>(px[(y * width + x) * 3 + c] / 255.0);
      }
    }
  }
  return img;
}

inline Tensor<float> read_ppm(const std::filesystem::path& path) {
  try {
    return parse_ppm(detail::read_file_bytes(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.detail(), e.offset());
  }
}

/// [3,H,W] in [0,1] -> P6 bytes (values rounded and clamped).
inline std::vector<std::uint8_t> encode_ppm(const Tensor<float>& img) {
  require_rank(img.dims(), 3, "encode_ppm");
  if (img.dim(0) != 3) throw ShapeError("encode_ppm: expected 3 channels");
  const std::size_t h = img.dim(1), w = img.dim(2);
  const std::string header =
      "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + h * w * 3);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(img[(c * h + y) * w + x] * 255.0, 0.0, 255.0);
        out.push_back(static_cast<std::uint8_t>(std::lround(v)));
      }
    }
  }
  return out;
}

inline void write_ppm(const std::filesystem::path& path, const Tensor<float>& img) {
  detail::write_file_bytes(path, encode_ppm(img));
}

inline std::string frame_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%06zu.ppm", index);
  return buf;
}

struct FrameSequence {
  std::vector<Tensor<float>> frames;  // each [3,H,W]
  std::vector<std::size_t> source_indices;
};

/// Counts the contiguous run frame_000000.ppm, frame_000001.ppm, ...
inline std::size_t count_frames(const std::filesystem::path& dir) {
  std::size_t n = 0;
  while (std::filesystem::exists(dir / frame_file_name(n))) ++n;
  return n;
}

/// Loads k frames chosen at equal time intervals from a frames directory.
inline FrameSequence load_frame_sequence(const std::filesystem::path& dir,
                                         std::size_t k) {
  const std::size_t total = count_frames(dir);
  if (total == 0) {
    throw IoError("no frame_%06d.ppm files in '" + dir.string() + "'");
  }
  FrameSequence seq;
  seq.source_indices = sample_equal_interval(total, k);
  for (std::size_t idx : seq.source_indices) {
    seq.frames.push_back(read_ppm(dir / frame_file_name(idx)));
    if (seq.frames.back().dims() != seq.frames.front().dims()) {
      throw ShapeError("frames in '" + dir.string() +
                       "' have differing dimensions");
    }
  }
  return seq;
}

}  // namespace avfer
