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
#include <string>
#include <vector>

#include "avfer/core/ops.hpp"
#include "avfer/model/layers.hpp"

namespace avfer {

inline constexpr std::size_t kShuffleGroups = 4;
inline constexpr std::size_t kAttentionReduction = 4;
inline constexpr std::size_t kSpatialKernel = 7;

/// Output channel j reads input channel perm[j]: channels viewed as
/// (groups, C/groups), transposed to (C/groups, groups), then flattened.
inline std::vector<std::size_t> channel_shuffle_permutation(std::size_t channels,
                                                            std::size_t groups) {
  if (groups == 0 || channels % groups != 0) {
    throw ConfigError("channel_shuffle: " + std::to_string(channels) +
                      " channels are not divisible into " +
                      std::to_string(groups) + " groups");
  }
  const std::size_t per_group = channels / groups;
  std::vector<std::size_t> perm(channels);
  for (std::size_t a = 0; a < per_group; ++a) {
    for (std::size_t b = 0; b < groups; ++b) perm[a * groups + b] = b * per_group + a;
  }
  return perm;
}

namespace detail {

template <typename T>
Tensor<T> gather_channels(const Tensor<T>& x, const std::vector<std::size_t>& src) {
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> out(x.dims());
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t j = 0; j < c; ++j) {
      std::copy_n(x.ptr() + (s * c + src[j]) * hw, hw, out.ptr() + (s * c + j) * hw);
    }
  }
  return out;
}

}  // namespace detail

template <typename T>
Tensor<T> channel_shuffle(const Tensor<T>& x, std::size_t groups = kShuffleGroups) {
  require_rank(x.dims(), 4, "channel_shuffle");
  return detail::gather_channels(x, channel_shuffle_permutation(x.dim(1), groups));
}

/// Applies the inverse permutation (the adjoint of a permutation).
template <typename T>
Tensor<T> channel_shuffle_backward(const Tensor<T>& dy,
                                   std::size_t groups = kShuffleGroups) {
  const auto perm = channel_shuffle_permutation(dy.dim(1), groups);
  std::vector<std::size_t> inverse(perm.size());
  for (std::size_t j = 0; j < perm.size(); ++j) inverse[perm[j]] = j;
  return detail::gather_channels(dy, inverse);
}

inline void require_attention_channels(std::size_t channels) {
  if (channels == 0 || channels % kAttentionReduction != 0) {
    throw ConfigError("GCSA needs a channel count divisible by 4, got " +
                      std::to_string(channels));
  }
}

/// Global channel-spatial attention: channel-attention gating, 4-group
/// channel shuffle, then spatial-attention gating. Parameters live in the
/// network state under `<prefix>.mlp_w1`, `<prefix>.spatial_conv1.weight`, ...
/// With `enabled == false` the module is the identity (ablation).
template <typename T>
class Gcsa {
 public:
  Gcsa() = default;
  Gcsa(std::string prefix, std::size_t channels, bool enabled = true)
      : prefix_(std::move(prefix)), channels_(channels), enabled_(enabled),
        mlp1_{prefix_ + ".mlp1", channels, channels / kAttentionReduction, {}},
        mlp2_{prefix_ + ".mlp2", channels / kAttentionReduction, channels, {}},
        sconv1_{prefix_ + ".spatial_conv1", channels,
                channels / kAttentionReduction, kSpatialKernel, kSpatialKernel, {}},
        sbn1_{prefix_ + ".spatial_bn1", channels / kAttentionReduction, {}},
        sconv2_{prefix_ + ".spatial_conv2", channels / kAttentionReduction,
                channels, kSpatialKernel, kSpatialKernel, {}},
        sbn2_{prefix_ + ".spatial_bn2", channels, {}} {
    require_attention_channels(channels);
  }

  std::size_t channels() const { return channels_; }
  bool enabled() const { return enabled_; }

  void declare(std::vector<ParamDecl>& out) const {
    if (!enabled_) return;
    mlp1_.declare(out);
    mlp2_.declare(out);
    sconv1_.declare(out);
    sbn1_.declare(out);
    sconv2_.declare(out);
    sbn2_.declare(out);
  }

  /// F_channel = sigmoid(MLP(permute(F))) (inverse-permuted) * F.
  Tensor<T> channel_attention(NetContext<T>& ctx, const Tensor<T>& x) {
    check_input(x);
    ca_input_ = x;
    Tensor<T> rows = to_channel_last(x);
    Tensor<T> hidden = mlp_relu_.forward(ctx, mlp1_.forward(ctx, rows));
    ca_map_ = sigmoid(from_channel_last(mlp2_.forward(ctx, hidden), x.dims()));
    return multiply(x, ca_map_);
  }

  Tensor<T> channel_attention_backward(NetContext<T>& ctx, const Tensor<T>& dy) {
    Tensor<T> dx = multiply(dy, ca_map_);
    Tensor<T> dmap = sigmoid_backward(ca_map_, multiply(dy, ca_input_));
    Tensor<T> drows = mlp1_.backward(
        ctx, mlp_relu_.backward(ctx, mlp2_.backward(ctx, to_channel_last(dmap))));
    dx += from_channel_last(drows, ca_input_.dims());
    return dx;
  }

  /// F_spatial = sigmoid(BN(conv7(ReLU(BN(conv7(F)))))) * F.
  Tensor<T> spatial_attention(NetContext<T>& ctx, const Tensor<T>& x) {
    check_input(x);
    sa_input_ = x;
    Tensor<T> h = sa_relu_.forward(ctx, sbn1_.forward(ctx, sconv1_.forward(ctx, x)));
    sa_map_ = sigmoid(sbn2_.forward(ctx, sconv2_.forward(ctx, h)));
    return multiply(x, sa_map_);
  }

  Tensor<T> spatial_attention_backward(NetContext<T>& ctx, const Tensor<T>& dy) {
    Tensor<T> dx = multiply(dy, sa_map_);
    Tensor<T> dpre = sigmoid_backward(sa_map_, multiply(dy, sa_input_));
    Tensor<T> dh = sbn2_.backward(ctx, dpre);
    dh = sconv2_.backward(ctx, dh);
    dh = sa_relu_.backward(ctx, dh);
    dx += sconv1_.backward(ctx, sbn1_.backward(ctx, dh));
    return dx;
  }

  Tensor<T> forward(NetContext<T>& ctx, const Tensor<T>& x) {
    if (!enabled_) return x;
    return spatial_attention(ctx, channel_shuffle(channel_attention(ctx, x)));
  }

  Tensor<T> backward(NetContext<T>& ctx, const Tensor<T>& dy) {
    if (!enabled_) return dy;
    return channel_attention_backward(
        ctx, channel_shuffle_backward(spatial_attention_backward(ctx, dy)));
  }

  const Tensor<T>& channel_map() const { return ca_map_; }
  const Tensor<T>& spatial_map() const { return sa_map_; }

 private:
  void check_input(const Tensor<T>& x) const {
    require_rank(x.dims(), 4, "gcsa");
    require_attention_channels(x.dim(1));
    if (x.dim(1) != channels_) {
      throw ShapeError("gcsa: input has " + std::to_string(x.dim(1)) +
                       " channels, module built for " + std::to_string(channels_));
    }
  }

  std::string prefix_;
  std::size_t channels_ = 0;
  bool enabled_ = true;

  LinearUnit<T> mlp1_, mlp2_;
  ReluUnit<T> mlp_relu_;
  Tensor<T> ca_input_, ca_map_;

  Conv2dUnit<T> sconv1_;
  BatchNormUnit<T> sbn1_;
  ReluUnit<T> sa_relu_;
  Conv2dUnit<T> sconv2_;
  BatchNormUnit<T> sbn2_;
  Tensor<T> sa_input_, sa_map_;
};

}  // namespace avfer
