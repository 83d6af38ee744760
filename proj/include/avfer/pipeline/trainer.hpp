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
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "avfer/core/ops.hpp"
#include "avfer/core/optim.hpp"
#include "avfer/fusion.hpp"
#include "avfer/losses.hpp"
#include "avfer/model/network.hpp"
#include "avfer/pipeline/checkpoint.hpp"
#include "avfer/pipeline/config.hpp"
#include "avfer/pipeline/manifest.hpp"
#include "avfer/preprocess/frames.hpp"
#include "avfer/preprocess/masking.hpp"
#include "avfer/preprocess/spectrogram.hpp"

namespace avfer {

/// Model-ready tensors of one manifest entry (unmasked spectrogram).
struct PreparedSample {
  std::string id;
  std::size_t label = 0;
  Spectrogram mel;       // [1,1,mel,time]
  Tensor<float> frames;  // [k,3,H,W]
};

inline PreparedSample prepare_sample(const ManifestEntry& e, const TrainConfig& cfg) {
  PreparedSample s;
  s.id = e.id;
  s.label = e.label;
  s.mel = audio_to_mel(read_wav(e.audio_path), cfg.spectrogram());
  const FrameSequence seq = load_frame_sequence(e.frames_dir, cfg.frames_per_clip);
  const std::size_t size = cfg.extractor.image_size;
  if (seq.frames.front().dims() != Dims{3, size, size}) {
    throw ShapeError("frames of '" + e.id + "' are " +
                     dims_to_string(seq.frames.front().dims()) + ", expected [3," +
                     std::to_string(size) + "," + std::to_string(size) + "]");
  }
  const std::size_t k = seq.frames.size(), plane = 3 * size * size;
  s.frames = Tensor<float>({k, 3, size, size});
  for (std::size_t f = 0; f < k; ++f) {
    std::copy_n(seq.frames[f].ptr(), plane, s.frames.ptr() + f * plane);
  }
  return s;
}

inline std::vector<PreparedSample> prepare_samples(const DatasetManifest& m,
                                                   const TrainConfig& cfg) {
  std::vector<PreparedSample> out;
  out.reserve(m.entries.size());
  for (const auto& e : m.entries) out.push_back(prepare_sample(e, cfg));
  return out;
}

inline NetworkConfig network_config(const TrainConfig& cfg, Modality modality) {
  return {modality, cfg.extractor, cfg.gcsa_enabled, cfg.dropout, kNumClasses};
}

/// Trained (or freshly initialized) parameters of both modalities.
struct ModelBundle {
  TrainConfig config;
  NetState<float> audio;
  NetState<float> visual;
  std::size_t epochs_completed = 0;
  std::optional<FusionRatio> fusion_ratio;

  NetState<float>& state(Modality m) { return m == Modality::kAudio ? audio : visual; }
};

inline ModelBundle init_model(const TrainConfig& cfg) {
  cfg.validate();
  ModelBundle b;
  b.config = cfg;
  b.audio = init_params<float>(network_config(cfg, Modality::kAudio),
                               mix_seed(cfg.seed, 1), cfg.lr_backbones, cfg.lr_heads);
  b.visual = init_params<float>(network_config(cfg, Modality::kVisual),
                                mix_seed(cfg.seed, 2), cfg.lr_backbones, cfg.lr_heads);
  return b;
}

// ---------------------------------------------------------------------------
// Batching.
// ---------------------------------------------------------------------------

/// Stacks spectrograms into [B,1,mel,Tmax]; shorter clips are padded on the
/// right with the silence value.
inline Tensor<float> stack_spectrograms(const std::vector<const Spectrogram*>& specs) {
  const std::size_t h = specs.front()->mel_bins();
  std::size_t w = 0;
  for (const auto* s : specs) w = std::max(w, s->frames());
  Tensor<float> x({specs.size(), 1, h, w}, static_cast<float>(log_silence()));
  for (std::size_t b = 0; b < specs.size(); ++b) {
    const auto& v = specs[b]->values;
    const std::size_t sw = specs[b]->frames();
    for (std::size_t r = 0; r < h; ++r) {
      std::copy_n(v.ptr() + r * sw, sw, x.ptr() + (b * h + r) * w);
    }
  }
  return x;
}

/// Concatenates [k,3,H,W] frame stacks into [B*k,3,H,W].
inline Tensor<float> stack_frames(const std::vector<const Tensor<float>*>& clips) {
  const Dims& d = clips.front()->dims();
  std::size_t total = 0;
  for (const auto* c : clips) total += c->dim(0);
  Tensor<float> x({total, d[1], d[2], d[3]});
  float* dst = x.ptr();
  for (const auto* c : clips) dst = std::copy_n(c->ptr(), c->size(), dst);
  return x;
}

/// Clip-level probabilities from per-frame softmax rows [clips*k, M].
inline std::vector<EmotionProbVector> clip_probs(const Tensor<float>& probs,
                                                 std::size_t clips) {
  const std::size_t m = probs.dim(1), k = probs.dim(0) / clips;
  std::vector<EmotionProbVector> out;
  for (std::size_t c = 0; c < clips; ++c) {
    std::vector<EmotionProbVector> frames;
    for (std::size_t f = 0; f < k; ++f) {
      const float* row = probs.ptr() + (c * k + f) * m;
      frames.push_back(EmotionProbVector::normalized(std::vector<double>(row, row + m)));
    }
    out.push_back(average_probs(frames));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training.
// ---------------------------------------------------------------------------

struct ModalityEpochStats {
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t batches = 0;
  std::size_t dropped_batches = 0;
};

struct EpochLog {
  std::size_t epoch = 0;
  std::optional<ModalityEpochStats> audio;
  std::optional<ModalityEpochStats> visual;

  nlohmann::json to_json() const {
    nlohmann::json j{{"epoch", epoch}};
    auto put = [&](const char* name, const std::optional<ModalityEpochStats>& s) {
      if (!s) return;
      j[std::string(name) + "_loss"] = s->loss;
      j[std::string(name) + "_accuracy"] = s->accuracy;
      j[std::string(name) + "_dropped_batches"] = s->dropped_batches;
    };
    put("audio", audio);
    put("visual", visual);
    return j;
  }
};

struct TrainOptions {
  bool audio = true;
  bool visual = true;
  std::function<void(const EpochLog&)> on_epoch;
  std::function<void(const std::string&)> warn;
};

/// Seeded, single-threaded mini-batch SGD over both modalities, which share
/// nothing: each has its own network, loss and optimizer groups.
class Trainer {
 public:
  Trainer(ModelBundle model, const std::vector<PreparedSample>& samples,
          TrainOptions options = {})
      : model_(std::move(model)), samples_(samples), options_(std::move(options)) {
    if (samples_.empty()) throw ConfigError("train: manifest is empty");
    std::vector<bool> seen(kNumClasses, false);
    for (const auto& s : samples_) seen.at(s.label) = true;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      if (!seen[c]) {
        throw ConfigError("train: class " + std::to_string(c) +
                          " has no training samples");
      }
    }
  }

  ModelBundle& model() { return model_; }
  const ModelBundle& model() const { return model_; }

  EpochLog run_epoch() {
    const std::size_t epoch = model_.epochs_completed;
    EpochLog log;
    log.epoch = epoch;
    if (options_.audio) log.audio = run_modality(Modality::kAudio, epoch);
    if (options_.visual) log.visual = run_modality(Modality::kVisual, epoch);
    ++model_.epochs_completed;
    if (options_.on_epoch) options_.on_epoch(log);
    return log;
  }

  std::vector<EpochLog> run(std::size_t epochs) {
    std::vector<EpochLog> logs;
    for (std::size_t e = 0; e < epochs; ++e) logs.push_back(run_epoch());
    return logs;
  }

  /// Epoch order: Fisher-Yates with seed (run seed + epoch).
  std::vector<std::size_t> epoch_order(std::size_t epoch) const {
    std::vector<std::size_t> order(samples_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(model_.config.seed + epoch);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.uniform_int(0, i - 1)]);
    }
    return order;
  }

 private:
  ModalityEpochStats run_modality(Modality modality, std::size_t epoch) {
    const TrainConfig& cfg = model_.config;
    ModalityNet<float> net(network_config(cfg, modality));
    NetState<float>& state = model_.state(modality);
    const auto order = epoch_order(epoch);

    ModalityEpochStats stats;
    double loss_sum = 0.0;
    std::size_t seen = 0, correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      if (end - start < 2) {
        ++stats.dropped_batches;
        if (options_.warn) {
          options_.warn(std::string(modality_name(modality)) + " epoch " +
                        std::to_string(epoch) + ": dropped a batch of size 1");
        }
        continue;
      }
      std::vector<std::size_t> idx(order.begin() + start, order.begin() + end);
      const std::uint64_t batch_seed = mix_seed(
          mix_seed(cfg.seed, epoch), (start << 1) | (modality == Modality::kVisual));

      Tensor<float> x;
      std::vector<std::size_t> labels;
      std::vector<Spectrogram> masked;
      if (modality == Modality::kAudio) {
        std::vector<const Spectrogram*> specs;
        masked.reserve(idx.size());
        for (auto i : idx) {
          const auto& s = samples_[i];
          if (cfg.masking_enabled) {
            MaskSpec m = cfg.mask;
            m.seed = mix_seed(mix_seed(cfg.seed, epoch), stable_hash(s.id));
            masked.push_back(frequency_mask(s.mel, m));
            specs.push_back(&masked.back());
          } else {
            specs.push_back(&s.mel);
          }
          labels.push_back(s.label);
        }
        x = stack_spectrograms(specs);
      } else {
        std::vector<const Tensor<float>*> clips;
        for (auto i : idx) {
          clips.push_back(&samples_[i].frames);
          labels.insert(labels.end(), samples_[i].frames.dim(0), samples_[i].label);
        }
        x = stack_frames(clips);
      }

      NamedTensors<float> grads;
      NetContext<float> ctx{state, Mode::kTrain, &grads,
                            {cfg.bn_epsilon, cfg.bn_momentum}};
      const Tensor<float> probs = softmax(net.forward(ctx, x, batch_seed));
      const auto loss = coarse_fine_loss(probs, labels, cfg.quadrant_map, cfg.mu);
      net.backward(ctx, loss.grad_logits);
      for (auto& group : state.groups) sgd_step(group, grads, cfg.momentum);

      const std::size_t clips = idx.size();
      const auto per_clip = clip_probs(probs, clips);
      for (std::size_t c = 0; c < clips; ++c) {
        correct += per_clip[c].argmax() == samples_[idx[c]].label;
      }
      loss_sum += loss.value * static_cast<double>(clips);
      seen += clips;
      ++stats.batches;
    }
    if (seen > 0) {
      stats.loss = loss_sum / static_cast<double>(seen);
      stats.accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    }
    return stats;
  }

  ModelBundle model_;
  const std::vector<PreparedSample>& samples_;
  TrainOptions options_;
};

/// Initializes from the config seed and trains for `cfg.epochs` epochs.
inline ModelBundle train(const std::vector<PreparedSample>& samples,
                         const TrainConfig& cfg, TrainOptions options = {},
                         std::vector<EpochLog>* logs = nullptr) {
  Trainer trainer(init_model(cfg), samples, std::move(options));
  auto l = trainer.run(cfg.epochs);
  if (logs) *logs = std::move(l);
  return std::move(trainer.model());
}

// ---------------------------------------------------------------------------
// Checkpoint conversion.
// ---------------------------------------------------------------------------

inline Checkpoint to_checkpoint(const ModelBundle& b) {
  Checkpoint ck;
  for (Modality m : {Modality::kAudio, Modality::kVisual}) {
    const NetState<float>& st = m == Modality::kAudio ? b.audio : b.visual;
    const std::string p = std::string(modality_name(m)) + "/";
    for (const auto& g : st.groups) {
      for (const auto& [name, t] : g.tensors) ck.tensors.emplace(p + name, t);
      for (const auto& [name, t] : g.momentum_buffers) {
        ck.tensors.emplace(p + "momentum/" + name, t);
      }
    }
    for (const auto& [name, t] : st.buffers) ck.tensors.emplace(p + name, t);
  }
  ck.metadata = {{"epoch", b.epochs_completed},
                 {"seed", b.config.seed},
                 {"config_hash", config_hash(b.config)},
                 {"config", to_json(b.config)},
                 {"fusion_ratio", nullptr}};
  if (b.fusion_ratio) {
    ck.metadata["fusion_ratio"] = {b.fusion_ratio->m, b.fusion_ratio->n};
  }
  return ck;
}

/// Rebuilds a bundle; every expected tensor must be present with the right
/// dims and nothing else may be.
inline ModelBundle from_checkpoint(const Checkpoint& ck) {
  if (!ck.metadata.contains("config")) {
    throw ConfigError("checkpoint metadata has no config");
  }
  ModelBundle b = init_model(train_config_from_json(ck.metadata.at("config")));
  std::size_t used = 0;
  auto take = [&](const std::string& key, Tensor<float>& dst) {
    auto it = ck.tensors.find(key);
    if (it == ck.tensors.end()) throw ConfigError("checkpoint lacks tensor '" + key + "'");
    if (it->second.dims() != dst.dims()) {
      throw ConfigError("checkpoint tensor '" + key + "' has dims " +
                        dims_to_string(it->second.dims()) + ", expected " +
                        dims_to_string(dst.dims()));
    }
    dst = it->second;
    ++used;
  };
  for (Modality m : {Modality::kAudio, Modality::kVisual}) {
    NetState<float>& st = b.state(m);
    const std::string p = std::string(modality_name(m)) + "/";
    for (auto& g : st.groups) {
      for (auto& [name, t] : g.tensors) take(p + name, t);
      for (auto& [name, t] : g.momentum_buffers) take(p + "momentum/" + name, t);
    }
    for (auto& [name, t] : st.buffers) take(p + name, t);
  }
  if (used != ck.tensors.size()) {
    throw ConfigError("checkpoint has " + std::to_string(ck.tensors.size() - used) +
                      " unexpected tensors");
  }
  b.epochs_completed = ck.metadata.value("epoch", std::size_t{0});
  const auto& r = ck.metadata.value("fusion_ratio", nlohmann::json());
  if (r.is_array() && r.size() == 2) {
    b.fusion_ratio = FusionRatio{r.at(0).get<int>(), r.at(1).get<int>()};
    b.fusion_ratio->validate();
  }
  return b;
}

}  // namespace avfer
