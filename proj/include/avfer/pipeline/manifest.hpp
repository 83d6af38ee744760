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

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "avfer/core/error.hpp"
#include "avfer/model/network.hpp"

namespace avfer {

struct ManifestEntry {
  std::string id;
  std::filesystem::path audio_path;
  std::filesystem::path frames_dir;
  std::size_t label = 0;
  std::string split = "train";
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
};

/// JSONL, one object per line: {"id", "audio_path", "frames_dir", "label",
/// "split"}. Relative paths are resolved against the manifest's directory.
/// With `verify_paths`, every referenced file must exist.
inline DatasetManifest load_manifest(const std::filesystem::path& path,
                                     bool verify_paths = true) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  const auto base = path.parent_path();
  DatasetManifest m;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0, offset = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t line_offset = offset;
    offset += line.size() + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + " line " + std::to_string(line_no);
    ManifestEntry e;
    try {
      const auto j = nlohmann::json::parse(line);
      e.id = j.at("id").get<std::string>();
      e.audio_path = j.at("audio_path").get<std::string>();
      e.frames_dir = j.at("frames_dir").get<std::string>();
      e.label = j.at("label").get<std::size_t>();
      e.split = j.value("split", std::string("train"));
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError(where + ": " + ex.what(), line_offset);
    }
    if (e.label >= kNumClasses) {
      throw ConfigError(where + ": label " + std::to_string(e.label) +
                        " is not below " + std::to_string(kNumClasses));
    }
    if (!ids.insert(e.id).second) {
      throw ConfigError(where + ": duplicate id '" + e.id + "'");
    }
    if (e.audio_path.is_relative()) e.audio_path = base / e.audio_path;
    if (e.frames_dir.is_relative()) e.frames_dir = base / e.frames_dir;
    if (verify_paths) {
      if (!std::filesystem::is_regular_file(e.audio_path)) {
        throw IoError(where + ": missing audio file '" + e.audio_path.string() + "'");
      }
      if (!std::filesystem::is_directory(e.frames_dir)) {
        throw IoError(where + ": missing frames directory '" +
                      e.frames_dir.string() + "'");
      }
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

/// Writes paths relative to the manifest's directory when possible.
inline void save_manifest(const std::filesystem::path& path,
                          const DatasetManifest& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
  const auto base = path.parent_path();
  auto rel = [&](const std::filesystem::path& p) {
    if (base.empty()) return p.generic_string();
    const auto r = p.lexically_relative(base);
    return r.empty() ? p.generic_string() : r.generic_string();
  };
  for (const auto& e : m.entries) {
    out << nlohmann::json{{"id", e.id},
                          {"audio_path", rel(e.audio_path)},
                          {"frames_dir", rel(e.frames_dir)},
                          {"label", e.label},
                          {"split", e.split}}
               .dump()
        << '\n';
  }
  if (!out) throw IoError("short write to manifest '" + path.string() + "'");
}

}  // namespace avfer
