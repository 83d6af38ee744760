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
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "avfer/core/rng.hpp"
#include "avfer/losses.hpp"
#include "avfer/model/extractors.hpp"
#include "avfer/pipeline/synth.hpp"
#include "avfer/preprocess/masking.hpp"
#include "avfer/preprocess/spectrogram.hpp"

namespace avfer {

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t epochs = 300;
  double lr_heads = 1e-2;
  double lr_backbones = 1e-2;
  double momentum = 0.9;
  double dropout = 0.2;
  std::uint64_t seed = 0;
  ExtractorConfig extractor;
  double window_ms = 25.0;
  double hop_ms = 10.0;
  std::uint32_t sample_rate = 16000;
  std::size_t frames_per_clip = 8;
  MaskSpec mask;  // seed is derived per sample and epoch
  bool masking_enabled = true;
  bool gcsa_enabled = true;
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;
  QuadrantMap quadrant_map = QuadrantMap::default_map();
  CoarsePenaltyMatrix mu = CoarsePenaltyMatrix::uniform(0.5);
  SynthSpec synth;

  SpectrogramConfig spectrogram() const {
    return {sample_rate, window_ms, hop_ms, extractor.mel_bins};
  }

  void validate() const {
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2 (batch norm)");
    if (epochs == 0) throw ConfigError("epochs must be >= 1");
    if (!(lr_heads >= 0.0) || !(lr_backbones >= 0.0)) {
      throw ConfigError("learning rates must be >= 0");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
    extractor.validate();
    if (frames_per_clip == 0) throw ConfigError("frames_per_clip must be >= 1");
    if (mask.max_width >= extractor.mel_bins) {
      throw ConfigError("mask.max_width must be below mel_bins");
    }
    if (quadrant_map.num_classes() != kNumClasses) {
      throw ConfigError("quadrant_map must cover all 8 classes");
    }
    synth.validate();
    if (synth.image_size != extractor.image_size) {
      throw ConfigError("synth.image_size must equal extractor.image_size");
    }
    if (synth.sample_rate != sample_rate) {
      throw ConfigError("synth.sample_rate must equal sample_rate");
    }
  }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::set<std::string> known,
                           const std::string& section) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) {
      throw ConfigError("unknown config key '" + (section.empty() ? "" : section + ".") +
                        key + "'");
    }
  }
}

template <typename V>
void read_opt(const nlohmann::json& j, const char* key, V& out) {
  if (j.contains(key)) out = j.at(key).get<V>();
}

}  // namespace detail

inline nlohmann::json to_json(const SynthSpec& s) {
  auto pairs = [](const std::vector<ClassPair>& ps) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& [x, y] : ps) a.push_back({x, y});
    return a;
  };
  return {{"classes", s.classes},
          {"samples_per_class", s.samples_per_class},
          {"sample_rate", s.sample_rate},
          {"clip_seconds", s.clip_seconds},
          {"frames_per_sample", s.frames_per_sample},
          {"image_size", s.image_size},
          {"audio_noise", s.audio_noise},
          {"visual_noise", s.visual_noise},
          {"audio_confused_pairs", pairs(s.audio_confused_pairs)},
          {"visual_confused_pairs", pairs(s.visual_confused_pairs)},
          {"split", s.split}};
}

inline SynthSpec synth_spec_from_json(const nlohmann::json& j, SynthSpec s = {}) {
  using detail::read_opt;
  detail::reject_unknown(j,
                         {"classes", "samples_per_class", "sample_rate", "clip_seconds",
                          "frames_per_sample", "image_size", "audio_noise",
                          "visual_noise", "audio_confused_pairs",
                          "visual_confused_pairs", "split"},
                         "synth");
  read_opt(j, "classes", s.classes);
  read_opt(j, "samples_per_class", s.samples_per_class);
  read_opt(j, "sample_rate", s.sample_rate);
  read_opt(j, "clip_seconds", s.clip_seconds);
  read_opt(j, "frames_per_sample", s.frames_per_sample);
  read_opt(j, "image_size", s.image_size);
  read_opt(j, "audio_noise", s.audio_noise);
  read_opt(j, "visual_noise", s.visual_noise);
  read_opt(j, "audio_confused_pairs", s.audio_confused_pairs);
  read_opt(j, "visual_confused_pairs", s.visual_confused_pairs);
  read_opt(j, "split", s.split);
  return s;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json kernels = nlohmann::json::array();
  for (const auto& branch : c.extractor.mcnn_branch_kernels) {
    kernels.push_back({{branch[0].height, branch[0].width},
                       {branch[1].height, branch[1].width}});
  }
  nlohmann::json mu = nlohmann::json::array();
  for (const auto& row : c.mu.values()) mu.push_back(row);
  return {
      {"batch_size", c.batch_size},
      {"epochs", c.epochs},
      {"lr_heads", c.lr_heads},
      {"lr_backbones", c.lr_backbones},
      {"momentum", c.momentum},
      {"dropout", c.dropout},
      {"seed", c.seed},
      {"extractor",
       {{"base_channels", c.extractor.base_channels},
        {"rhcnn_kernel", c.extractor.rhcnn_kernel},
        {"mcnn_branch_kernels", kernels},
        {"image_size", c.extractor.image_size},
        {"mel_bins", c.extractor.mel_bins}}},
      {"window_ms", c.window_ms},
      {"hop_ms", c.hop_ms},
      {"sample_rate", c.sample_rate},
      {"frames_per_clip", c.frames_per_clip},
      {"mask", {{"num_masks", c.mask.num_masks}, {"max_width", c.mask.max_width}}},
      {"masking_enabled", c.masking_enabled},
      {"gcsa_enabled", c.gcsa_enabled},
      {"bn_momentum", c.bn_momentum},
      {"bn_epsilon", c.bn_epsilon},
      {"quadrant_map", c.quadrant_map.values()},
      {"mu", mu},
      {"synth", to_json(c.synth)},
  };
}

/// Starts from `base` and overrides every key present in `j`. Unknown keys
/// are rejected so typos do not silently fall back to defaults.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  using detail::read_opt;
  try {
    detail::reject_unknown(
        j,
        {"batch_size", "epochs", "lr_heads", "lr_backbones", "momentum", "dropout",
         "seed", "extractor", "window_ms", "hop_ms", "sample_rate", "frames_per_clip",
         "mask", "masking_enabled", "gcsa_enabled", "bn_momentum", "bn_epsilon",
         "quadrant_map", "mu", "synth"},
        "");
    read_opt(j, "batch_size", c.batch_size);
    read_opt(j, "epochs", c.epochs);
    read_opt(j, "lr_heads", c.lr_heads);
    read_opt(j, "lr_backbones", c.lr_backbones);
    read_opt(j, "momentum", c.momentum);
    read_opt(j, "dropout", c.dropout);
    read_opt(j, "seed", c.seed);
    read_opt(j, "window_ms", c.window_ms);
    read_opt(j, "hop_ms", c.hop_ms);
    read_opt(j, "sample_rate", c.sample_rate);
    read_opt(j, "frames_per_clip", c.frames_per_clip);
    read_opt(j, "masking_enabled", c.masking_enabled);
    read_opt(j, "gcsa_enabled", c.gcsa_enabled);
    read_opt(j, "bn_momentum", c.bn_momentum);
    read_opt(j, "bn_epsilon", c.bn_epsilon);
    if (j.contains("extractor")) {
      const auto& e = j.at("extractor");
      detail::reject_unknown(e,
                             {"base_channels", "rhcnn_kernel", "mcnn_branch_kernels",
                              "image_size", "mel_bins"},
                             "extractor");
      read_opt(e, "base_channels", c.extractor.base_channels);
      read_opt(e, "rhcnn_kernel", c.extractor.rhcnn_kernel);
      read_opt(e, "image_size", c.extractor.image_size);
      read_opt(e, "mel_bins", c.extractor.mel_bins);
      if (e.contains("mcnn_branch_kernels")) {
        const auto& k = e.at("mcnn_branch_kernels");
        if (!k.is_array() || k.size() != kMcnnBranches) {
          throw ConfigError("extractor.mcnn_branch_kernels needs 3 branches");
        }
        for (std::size_t b = 0; b < kMcnnBranches; ++b) {
          for (std::size_t blk = 0; blk < 2; ++blk) {
            const auto& hw = k.at(b).at(blk);
            c.extractor.mcnn_branch_kernels[b][blk] = {hw.at(0).get<std::size_t>(),
                                                      hw.at(1).get<std::size_t>()};
          }
        }
      }
    }
    if (j.contains("mask")) {
      const auto& m = j.at("mask");
      detail::reject_unknown(m, {"num_masks", "max_width"}, "mask");
      read_opt(m, "num_masks", c.mask.num_masks);
      read_opt(m, "max_width", c.mask.max_width);
    }
    if (j.contains("quadrant_map")) {
      c.quadrant_map = QuadrantMap(j.at("quadrant_map").get<std::vector<int>>());
    }
    if (j.contains("mu")) {
      c.mu = CoarsePenaltyMatrix(j.at("mu").get<CoarsePenaltyMatrix::Matrix>());
    }
    if (j.contains("synth")) c.synth = synth_spec_from_json(j.at("synth"), c.synth);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return train_config_from_json(j);
}

inline std::uint64_t config_hash(const TrainConfig& c) {
  return stable_hash(to_json(c).dump());
}

}  // namespace avfer
