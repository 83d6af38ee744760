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

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "avfer/core/error.hpp"
#include "avfer/core/tensor.hpp"
#include "avfer/preprocess/wav.hpp"

namespace avfer {

/// Binary archive of named float tensors plus JSON metadata ("AFK1" format):
///   magic "AFK1" | version u32 | tensor count u32 |
///   per tensor: name length u16, UTF-8 name, rank u8, dims u32 x rank,
///               dtype u8 (0 = float32), little-endian payload |
///   metadata length u32 | UTF-8 JSON
/// All integers are little-endian.
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;
  static constexpr std::uint8_t kDtypeFloat32 = 0;

  std::uint32_t version = kFormatVersion;
  NamedTensors<float> tensors;
  nlohmann::json metadata = nlohmann::json::object();
};

namespace detail {

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  const std::uint8_t* take(std::size_t n, const char* what) {
    if (remaining() < n) {
      throw ParseError(std::string("checkpoint: truncated ") + what, pos_);
    }
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::uint8_t u8(const char* what) { return *take(1, what); }
  std::uint16_t u16(const char* what) { return load_u16le(take(2, what)); }
  std::uint32_t u32(const char* what) { return load_u32le(take(4, what)); }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  using detail::store_u16le;
  using detail::store_u32le;
  std::vector<std::uint8_t> out{'A', 'F', 'K', '1'};
  store_u32le(out, ck.version);
  store_u32le(out, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, t] : ck.tensors) {
    if (name.size() > 0xffff) throw ConfigError("tensor name too long: " + name);
    if (t.rank() > 0xff) throw ConfigError("tensor rank too large: " + name);
    store_u16le(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.dims()) {
      if (d > 0xffffffffu) throw ConfigError("tensor dim too large: " + name);
      store_u32le(out, static_cast<std::uint32_t>(d));
    }
    out.push_back(Checkpoint::kDtypeFloat32);
    for (float v : t.data()) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      store_u32le(out, bits);
    }
  }
  const std::string meta = ck.metadata.dump();
  store_u32le(out, static_cast<std::uint32_t>(meta.size()));
  out.insert(out.end(), meta.begin(), meta.end());
  return out;
}

/// Parses a whole archive or throws ParseError; never returns partial state.
inline Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader rd(bytes);
  const std::uint8_t* magic = rd.take(4, "magic");
  if (std::memcmp(magic, "AFK1", 4) != 0) {
    throw ParseError("checkpoint: bad magic (expected \"AFK1\")", 0);
  }
  Checkpoint ck;
  const std::size_t version_at = rd.offset();
  ck.version = rd.u32("version");
  if (ck.version != Checkpoint::kFormatVersion) {
    throw ParseError("checkpoint: unsupported format version " +
                         std::to_string(ck.version),
                     version_at);
  }
  const std::uint32_t count = rd.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = rd.u16("tensor name length");
    const auto* name_bytes = rd.take(name_len, "tensor name");
    std::string name(reinterpret_cast<const char*>(name_bytes), name_len);
    const std::size_t rank_at = rd.offset();
    const std::uint8_t rank = rd.u8("rank");
    if (rank == 0) throw ParseError("checkpoint: tensor '" + name + "' has rank 0", rank_at);
    Dims dims;
    std::uint64_t elems = 1;
    for (std::uint8_t r = 0; r < rank; ++r) {
      const std::size_t dim_at = rd.offset();
      const std::uint32_t d = rd.u32("dims");
      if (d == 0) throw ParseError("checkpoint: zero dim in '" + name + "'", dim_at);
      if (d > (rd.remaining() / 4 + 1) / elems) {
        throw ParseError("checkpoint: dims of '" + name + "' overflow the file",
                         dim_at);
      }
      elems *= d;
      dims.push_back(d);
    }
    const std::size_t dtype_at = rd.offset();
    if (rd.u8("dtype") != Checkpoint::kDtypeFloat32) {
      throw ParseError("checkpoint: unknown dtype for '" + name + "'", dtype_at);
    }
    const std::uint8_t* payload = rd.take(elems * 4, "tensor payload");
    AlignedVector<float> data(elems);
    for (std::size_t k = 0; k < elems; ++k) {
      const std::uint32_t bits = detail::load_u32le(payload + 4 * k);
      std::memcpy(&data[k], &bits, 4);
    }
    if (!ck.tensors.emplace(name, Tensor<float>(std::move(dims), std::move(data))).second) {
      throw ParseError("checkpoint: duplicate tensor '" + name + "'", rank_at);
    }
  }
  const std::uint32_t meta_len = rd.u32("metadata length");
  const std::size_t meta_at = rd.offset();
  const auto* meta = rd.take(meta_len, "metadata");
  try {
    ck.metadata = nlohmann::json::parse(meta, meta + meta_len);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: metadata is not JSON: ") + e.what(),
                     meta_at);
  }
  if (rd.remaining() != 0) {
    throw ParseError("checkpoint: trailing bytes after metadata", rd.offset());
  }
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  detail::write_file_bytes(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(detail::read_file_bytes(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.detail(), e.offset());
  }
}

}  // namespace avfer
