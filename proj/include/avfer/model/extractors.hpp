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

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "avfer/core/ops.hpp"
#include "avfer/model/gcsa.hpp"
#include "avfer/model/layers.hpp"

namespace avfer {

struct KernelSize {
  std::size_t height = 3;
  std::size_t width = 3;
};

/// Two blocks per branch; branches are local, temporal, spatial in that order.
using BranchKernels = std::array<std::array<KernelSize, 2>, 3>;

inline constexpr std::size_t kMcnnBranches = 3;

struct ExtractorConfig {
  std::size_t base_channels = 8;
  std::size_t rhcnn_kernel = 3;
  BranchKernels mcnn_branch_kernels{{
      {{{3, 3}, {3, 3}}},  // local
      {{{1, 7}, {1, 5}}},  // temporal (time axis)
      {{{7, 1}, {5, 1}}},  // spatial (frequency axis)
  }};
  std::size_t image_size = 16;
  std::size_t mel_bins = 64;

  void validate() const {
    if (base_channels == 0 || base_channels % 4 != 0) {
      throw ConfigError("base_channels must be a positive multiple of 4, got " +
                        std::to_string(base_channels));
    }
    if (rhcnn_kernel % 2 == 0) {
      throw ConfigError("rhcnn_kernel must be odd, got " +
                        std::to_string(rhcnn_kernel));
    }
    for (const auto& branch : mcnn_branch_kernels) {
      for (const auto& k : branch) {
        if (k.height % 2 == 0 || k.width % 2 == 0) {
          throw ConfigError("MCNN branch kernels must have odd extents");
        }
      }
    }
    if (image_size < rhcnn_kernel) {
      throw ConfigError("image_size must be at least rhcnn_kernel");
    }
  }

  std::size_t audio_channels() const { return kMcnnBranches * base_channels; }
  std::size_t visual_channels() const { return 2 * base_channels; }
};

/// Multi-branch CNN over a [N,1,mel,time] spectrogram batch. Each branch is
/// two conv-BN-ReLU blocks with its own kernel shapes; the branch outputs are
/// concatenated, so channel block b in [b*B, (b+1)*B) belongs to branch b.
template <typename T>
class Mcnn {
 public:
  Mcnn() = default;
  Mcnn(const std::string& prefix, const ExtractorConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    static const char* kNames[kMcnnBranches] = {"local", "temporal", "spatial"};
    const std::size_t b = cfg.base_channels;
    for (std::size_t i = 0; i < kMcnnBranches; ++i) {
      const auto& k = cfg.mcnn_branch_kernels[i];
      const std::string name = prefix + "." + kNames[i];
      branches_[i] = {ConvBlock<T>(name + ".0", 1, b, k[0].height, k[0].width),
                      ConvBlock<T>(name + ".1", b, b, k[1].height, k[1].width)};
    }
  }

  static std::string branch_name(std::size_t i) {
    static const char* kNames[kMcnnBranches] = {"local", "temporal", "spatial"};
    return kNames[i];
  }

  std::size_t out_channels() const { return cfg_.audio_channels(); }

  void declare(std::vector<ParamDecl>& out) const {
    for (const auto& br : branches_) {
      br.first.declare(out);
      br.second.declare(out);
    }
  }

  Tensor<T> forward(NetContext<T>& ctx, const Tensor<T>& x) {
    require_rank(x.dims(), 4, "mcnn");
    if (x.dim(1) != 1) throw ShapeError("mcnn: expects a single input channel");
    std::vector<Tensor<T>> outs;
    for (auto& br : branches_) {
      outs.push_back(br.second.forward(ctx, br.first.forward(ctx, x)));
    }
    return concat_channels(outs);
  }

  Tensor<T> backward(NetContext<T>& ctx, const Tensor<T>& dy) {
    const std::size_t b = cfg_.base_channels;
    Tensor<T> dx;
    for (std::size_t i = 0; i < kMcnnBranches; ++i) {
      auto& br = branches_[i];
      Tensor<T> d = br.first.backward(
          ctx, br.second.backward(ctx, slice_channels(dy, i * b, b)));
      if (dx.empty()) {
        dx = std::move(d);
      } else {
        dx += d;
      }
    }
    return dx;
  }

 private:
  ExtractorConfig cfg_;
  std::array<std::pair<ConvBlock<T>, ConvBlock<T>>, kMcnnBranches> branches_;
};

/// Residual hybrid CNN over [N,3,H,W] images:
///   stem: conv-BN-ReLU (3 -> B), conv-BN-ReLU (B -> 2B), both NxN
///   residual: y = x + BN(pw(B->2B)(ReLU(BN(dw NxN(ReLU(BN(pw(2B->B)(x))))))))
///   then ReLU and a 4-group channel shuffle.
template <typename T>
class Rhcnn {
 public:
  Rhcnn() = default;
  Rhcnn(const std::string& prefix, const ExtractorConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    const std::size_t b = cfg.base_channels, k = cfg.rhcnn_kernel;
    stem0_ = ConvBlock<T>(prefix + ".stem0", 3, b, k, k);
    stem1_ = ConvBlock<T>(prefix + ".stem1", b, 2 * b, k, k);
    reduce_ = ConvBlock<T>(prefix + ".res.reduce", 2 * b, b, 1, 1);
    dw_ = DepthwiseUnit<T>{prefix + ".res.dw", b, k, {}};
    dw_bn_ = BatchNormUnit<T>{prefix + ".res.dw_bn", b, {}};
    expand_ = ConvBlock<T>(prefix + ".res.expand", b, 2 * b, 1, 1, false);
  }

  std::size_t out_channels() const { return cfg_.visual_channels(); }

  void declare(std::vector<ParamDecl>& out) const {
    stem0_.declare(out);
    stem1_.declare(out);
    reduce_.declare(out);
    dw_.declare(out);
    dw_bn_.declare(out);
    expand_.declare(out);
  }

  Tensor<T> forward(NetContext<T>& ctx, const Tensor<T>& x) {
    require_rank(x.dims(), 4, "rhcnn");
    if (x.dim(1) != 3) throw ShapeError("rhcnn: expects 3 input channels");
    if (x.dim(2) < cfg_.rhcnn_kernel || x.dim(3) < cfg_.rhcnn_kernel) {
      throw ShapeError("rhcnn: image smaller than the kernel");
    }
    Tensor<T> s = stem1_.forward(ctx, stem0_.forward(ctx, x));
    Tensor<T> r = reduce_.forward(ctx, s);
    r = dw_relu_.forward(ctx, dw_bn_.forward(ctx, dw_.forward(ctx, r)));
    r = expand_.forward(ctx, r);
    r += s;
    return channel_shuffle(out_relu_.forward(ctx, r));
  }

  Tensor<T> backward(NetContext<T>& ctx, const Tensor<T>& dy) {
    Tensor<T> d = out_relu_.backward(ctx, channel_shuffle_backward(dy));
    Tensor<T> dr = expand_.backward(ctx, d);
    dr = dw_.backward(ctx, dw_bn_.backward(ctx, dw_relu_.backward(ctx, dr)));
    dr = reduce_.backward(ctx, dr);
    d += dr;
    return stem0_.backward(ctx, stem1_.backward(ctx, d));
  }

 private:
  ExtractorConfig cfg_;
  ConvBlock<T> stem0_, stem1_, reduce_;
  DepthwiseUnit<T> dw_;
  BatchNormUnit<T> dw_bn_;
  ReluUnit<T> dw_relu_;
  ConvBlock<T> expand_;
  ReluUnit<T> out_relu_;
};

}  // namespace avfer
