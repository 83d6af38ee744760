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
#include <string>
#include <variant>
#include <vector>

#include "avfer/core/ops.hpp"
#include "avfer/model/extractors.hpp"
#include "avfer/model/gcsa.hpp"
#include "avfer/model/layers.hpp"

namespace avfer {

inline constexpr std::size_t kNumClasses = 8;

enum class Modality { kAudio, kVisual };

inline const char* modality_name(Modality m) {
  return m == Modality::kAudio ? "audio" : "visual";
}

struct NetworkConfig {
  Modality modality = Modality::kAudio;
  ExtractorConfig extractor;
  bool gcsa_enabled = true;
  double dropout = 0.2;
  std::size_t num_classes = kNumClasses;
};

/// Classification head: global average pool -> dropout -> linear. Returns
/// logits; probabilities are softmax(logits).
template <typename T>
class Head {
 public:
  Head() = default;
  Head(const std::string& prefix, std::size_t channels, std::size_t classes,
       double dropout_p)
      : fc_{prefix + ".fc", channels, classes, {}}, p_(dropout_p) {
    if (!(p_ >= 0.0 && p_ < 1.0)) {
      throw ConfigError("dropout must be in [0, 1), got " + std::to_string(p_));
    }
  }

  void declare(std::vector<ParamDecl>& out) const { fc_.declare(out); }

  Tensor<T> forward(NetContext<T>& ctx, const Tensor<T>& features,
                    std::uint64_t dropout_seed) {
    feature_dims_ = features.dims();
    auto dr = dropout(global_avg_pool(features), p_, ctx.mode, dropout_seed);
    mask_ = std::move(dr.mask);
    return fc_.forward(ctx, dr.output);
  }

  Tensor<T> backward(NetContext<T>& ctx, const Tensor<T>& dlogits) {
    return global_avg_pool_backward(
        feature_dims_, dropout_backward(mask_, fc_.backward(ctx, dlogits)));
  }

 private:
  LinearUnit<T> fc_;
  double p_ = 0.0;
  Dims feature_dims_;
  Tensor<T> mask_;
};

/// One modality: backbone (MCNN or RHCNN) -> GCSA -> head.
/// Parameter names: "backbone.*", "gcsa.*", "head.*".
template <typename T>
class ModalityNet {
 public:
  static constexpr const char* kBackboneGroup = "backbone";
  static constexpr const char* kHeadGroup = "head";

  explicit ModalityNet(const NetworkConfig& cfg) : cfg_(cfg) {
    cfg.extractor.validate();
    std::size_t channels;
    if (cfg.modality == Modality::kAudio) {
      backbone_ = Mcnn<T>("backbone", cfg.extractor);
      channels = cfg.extractor.audio_channels();
    } else {
      backbone_ = Rhcnn<T>("backbone", cfg.extractor);
      channels = cfg.extractor.visual_channels();
    }
    gcsa_ = Gcsa<T>("gcsa", channels, cfg.gcsa_enabled);
    head_ = Head<T>("head", channels, cfg.num_classes, cfg.dropout);
  }

  const NetworkConfig& config() const { return cfg_; }

  std::vector<ParamDecl> declarations() const {
    std::vector<ParamDecl> d;
    std::visit([&](const auto& b) { b.declare(d); }, backbone_);
    gcsa_.declare(d);
    head_.declare(d);
    return d;
  }

  /// Backbone features before attention.
  Tensor<T> backbone_forward(NetContext<T>& ctx, const Tensor<T>& x) {
    return std::visit([&](auto& b) { return b.forward(ctx, x); }, backbone_);
  }

  /// Backbone followed by GCSA.
  Tensor<T> features(NetContext<T>& ctx, const Tensor<T>& x) {
    return gcsa_.forward(ctx, backbone_forward(ctx, x));
  }

  Tensor<T> features_backward(NetContext<T>& ctx, const Tensor<T>& dy) {
    Tensor<T> d = gcsa_.backward(ctx, dy);
    return std::visit([&](auto& b) { return b.backward(ctx, d); }, backbone_);
  }

  Tensor<T> forward(NetContext<T>& ctx, const Tensor<T>& x,
                    std::uint64_t dropout_seed = 0) {
    return head_.forward(ctx, features(ctx, x), dropout_seed);
  }

  Tensor<T> backward(NetContext<T>& ctx, const Tensor<T>& dlogits) {
    return features_backward(ctx, head_.backward(ctx, dlogits));
  }

  Gcsa<T>& gcsa() { return gcsa_; }

 private:
  NetworkConfig cfg_;
  std::variant<Mcnn<T>, Rhcnn<T>> backbone_;
  Gcsa<T> gcsa_;
  Head<T> head_;
};

/// He-uniform weights (bound sqrt(6/fan_in)), zero biases, BN gamma 1 and
/// beta 0, running stats (0, 1). Parameters are split into a "backbone"
/// group (backbone + GCSA) and a "head" group.
template <typename T>
NetState<T> init_params(const NetworkConfig& cfg, std::uint64_t seed,
                        double lr_backbone = 0.0, double lr_head = 0.0) {
  const auto decls = ModalityNet<T>(cfg).declarations();
  NamedTensors<T> params, buffers;
  init_declared(decls, seed, params, buffers);
  NamedTensors<T> backbone, head;
  for (auto& [name, t] : params) {
    (name.rfind("head.", 0) == 0 ? head : backbone).emplace(name, std::move(t));
  }
  NetState<T> state;
  state.groups.emplace_back(ModalityNet<T>::kBackboneGroup, std::move(backbone),
                            lr_backbone);
  state.groups.emplace_back(ModalityNet<T>::kHeadGroup, std::move(head), lr_head);
  state.buffers = std::move(buffers);
  return state;
}

}  // namespace avfer
