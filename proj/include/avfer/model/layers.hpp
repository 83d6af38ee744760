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

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "avfer/core/error.hpp"
#include "avfer/core/ops.hpp"
#include "avfer/core/optim.hpp"
#include "avfer/core/rng.hpp"
#include "avfer/core/tensor.hpp"

namespace avfer {

/// How a declared tensor is initialized.
enum class InitKind { kHeUniform, kZero, kOne };

struct ParamDecl {
  std::string name;
  Dims dims;
  InitKind init = InitKind::kZero;
  std::size_t fan_in = 1;
  bool buffer = false;  // batch-norm running statistics, not learnable
};

/// Learnable parameters (split into optimizer groups) and non-learnable
/// buffers of one network.
template <typename T>
struct NetState {
  std::vector<ParamGroup<T>> groups;
  NamedTensors<T> buffers;

  Tensor<T>& param(const std::string& name) {
    for (auto& g : groups) {
      auto it = g.tensors.find(name);
      if (it != g.tensors.end()) return it->second;
    }
    throw ContractError("unknown parameter '" + name + "'");
  }

  const Tensor<T>& param(const std::string& name) const {
    return const_cast<NetState*>(this)->param(name);
  }

  Tensor<T>& buffer(const std::string& name) {
    auto it = buffers.find(name);
    if (it == buffers.end()) throw ContractError("unknown buffer '" + name + "'");
    return it->second;
  }

  NamedTensors<T> params() const {
    NamedTensors<T> all;
    for (const auto& g : groups) all.insert(g.tensors.begin(), g.tensors.end());
    return all;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& g : groups) {
      for (const auto& [name, t] : g.tensors) n += t.size();
    }
    return n;
  }

  ParamGroup<T>& group(const std::string& name) {
    for (auto& g : groups) {
      if (g.name == name) return g;
    }
    throw ContractError("unknown parameter group '" + name + "'");
  }

  template <typename U>
  NetState<U> cast() const {
    NetState<U> out;
    for (const auto& g : groups) {
      ParamGroup<U> cg(g.name, cast_all<U>(g.tensors), g.learning_rate);
      cg.momentum_buffers = cast_all<U>(g.momentum_buffers);
      out.groups.push_back(std::move(cg));
    }
    out.buffers = cast_all<U>(buffers);
    return out;
  }
};

/// Per-call state threaded through forward/backward.
template <typename T>
struct NetContext {
  NetState<T>& state;
  Mode mode = Mode::kEval;
  NamedTensors<T>* grads = nullptr;  // backward accumulates here when set
  BatchNormOptions bn{};
  /// Smallest |input| seen by any ReLU; gradient checks use it to stay away
  /// from the kink.
  double min_abs_relu_input = std::numeric_limits<double>::infinity();

  void accumulate(const std::string& name, Tensor<T> g) {
    if (grads == nullptr) return;
    auto it = grads->find(name);
    if (it == grads->end()) {
      grads->emplace(name, std::move(g));
    } else {
      it->second += g;
    }
  }
};

/// Draws every declared tensor. Declaration order fixes the RNG stream.
template <typename T>
void init_declared(const std::vector<ParamDecl>& decls, std::uint64_t seed,
                   NamedTensors<T>& params, NamedTensors<T>& buffers) {
  Rng rng(seed);
  for (const auto& d : decls) {
    Tensor<T> t(d.dims);
    switch (d.init) {
      case InitKind::kHeUniform: {
        const double bound = std::sqrt(6.0 / static_cast<double>(d.fan_in));
        for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
        break;
      }
      case InitKind::kOne:
        t.fill(T{1});
        break;
      case InitKind::kZero:
        break;
    }
    (d.buffer ? buffers : params).insert_or_assign(d.name, std::move(t));
  }
}

// ---------------------------------------------------------------------------
// Layer units. Each caches what its backward needs from the last forward.
// ---------------------------------------------------------------------------

template <typename T>
struct Conv2dUnit {
  std::string name;
  std::size_t in_channels = 0, out_channels = 0, kh = 1, kw = 1;
  Tensor<T> input;

  void declare(std::vector<ParamDecl>& out) const {
    out.push_back({name + ".weight", {out_channels, in_channels, kh, kw},
                   InitKind::kHeUniform, in_channels * kh * kw});
    out.push_back({name + ".bias", {out_channels}});
  }

  Tensor<T> forward(NetContext<T>& ctx, const Tensor<T>& x) {
    input = x;
    return conv2d(x, ctx.state.param(name + ".weight"),
                  ctx.state.param(name + ".bias"));
  }

  Tensor<T> backward(NetContext<T>& ctx, const Tensor<T>& dy) {
    auto g = conv2d_backward(input, ctx.state.param(name + ".weight"), dy);
    ctx.accumulate(name + ".weight", std::move(g.weight));
    ctx.accumulate(name + ".bias", std::move(g.bias));
    return std::move(g.input);
  }
};

template <typename T>
struct DepthwiseUnit {
  std::string name;
  std::size_t channels = 0, kernel = 3;
  Tensor<T> input;

  void declare(std::vector<ParamDecl>& out) const {
    out.push_back({name + ".weight", {channels, 1, kernel, kernel},
                   InitKind::kHeUniform, kernel * kernel});
    out.push_back({name + ".bias", {channels}});
  }

  Tensor<T> forward(NetContext<T>& ctx, const Tensor<T>& x) {
    input = x;
    return depthwise_conv2d(x, ctx.state.param(name + ".weight"),
                            ctx.state.param(name + ".bias"));
  }

  Tensor<T> backward(NetContext<T>& ctx, const Tensor<T>& dy) {
    auto g = depthwise_conv2d_backward(input, ctx.state.param(name + ".weight"), dy);
    ctx.accumulate(name + ".weight", std::move(g.weight));
    ctx.accumulate(name + ".bias", std::move(g.bias));
    return std::move(g.input);
  }
};

template <typename T>
struct BatchNormUnit {
  std::string name;
  std::size_t channels = 0;
  BatchNormCache<T> cache;

  void declare(std::vector<ParamDecl>& out) const {
    out.push_back({name + ".gamma", {channels}, InitKind::kOne});
    out.push_back({name + ".beta", {channels}});
    out.push_back({name + ".running_mean", {channels}, InitKind::kZero, 1, true});
    out.push_back({name + ".running_var", {channels}, InitKind::kOne, 1, true});
  }

  Tensor<T> forward(NetContext<T>& ctx, const Tensor<T>& x) {
    Tensor<T>& mean = ctx.state.buffer(name + ".running_mean");
    Tensor<T>& var = ctx.state.buffer(name + ".running_var");
    BatchNormState<T> st{mean, var};
    auto r = batch_norm(x, ctx.state.param(name + ".gamma"),
                        ctx.state.param(name + ".beta"), st, ctx.mode, ctx.bn);
    if (ctx.mode == Mode::kTrain) {
      mean = std::move(st.running_mean);
      var = std::move(st.running_var);
    }
    cache = std::move(r.cache);
    return std::move(r.output);
  }

  Tensor<T> backward(NetContext<T>& ctx, const Tensor<T>& dy) {
    auto g = batch_norm_backward(cache, ctx.state.param(name + ".gamma"), dy);
    ctx.accumulate(name + ".gamma", std::move(g.gamma));
    ctx.accumulate(name + ".beta", std::move(g.beta));
    return std::move(g.input);
  }
};

template <typename T>
struct ReluUnit {
  Tensor<T> input;

  Tensor<T> forward(NetContext<T>& ctx, const Tensor<T>& x) {
    input = x;
    for (auto v : x.data()) {
      ctx.min_abs_relu_input =
          std::min(ctx.min_abs_relu_input, std::abs(static_cast<double>(v)));
    }
    return relu(x);
  }

  Tensor<T> backward(NetContext<T>&, const Tensor<T>& dy) {
    return relu_backward(input, dy);
  }
};

template <typename T>
struct LinearUnit {
  std::string name;
  std::size_t in_features = 0, out_features = 0;
  Tensor<T> input;

  void declare(std::vector<ParamDecl>& out) const {
    out.push_back({name + ".weight", {out_features, in_features},
                   InitKind::kHeUniform, in_features});
    out.push_back({name + ".bias", {out_features}});
  }

  Tensor<T> forward(NetContext<T>& ctx, const Tensor<T>& x) {
    input = x;
    return linear(x, ctx.state.param(name + ".weight"),
                  ctx.state.param(name + ".bias"));
  }

  Tensor<T> backward(NetContext<T>& ctx, const Tensor<T>& dy) {
    auto g = linear_backward(input, ctx.state.param(name + ".weight"), dy);
    ctx.accumulate(name + ".weight", std::move(g.weight));
    ctx.accumulate(name + ".bias", std::move(g.bias));
    return std::move(g.input);
  }
};

/// conv -> batch norm -> optional ReLU.
template <typename T>
struct ConvBlock {
  Conv2dUnit<T> conv;
  BatchNormUnit<T> bn;
  bool with_relu = true;
  ReluUnit<T> act;

  ConvBlock() = default;
  ConvBlock(const std::string& name, std::size_t cin, std::size_t cout,
            std::size_t kh, std::size_t kw, bool relu_after = true)
      : conv{name + ".conv", cin, cout, kh, kw, {}},
        bn{name + ".bn", cout, {}},
        with_relu(relu_after) {}

  void declare(std::vector<ParamDecl>& out) const {
    conv.declare(out);
    bn.declare(out);
  }

  Tensor<T> forward(NetContext<T>& ctx, const Tensor<T>& x) {
    Tensor<T> y = bn.forward(ctx, conv.forward(ctx, x));
    return with_relu ? act.forward(ctx, y) : y;
  }

  Tensor<T> backward(NetContext<T>& ctx, const Tensor<T>& dy) {
    Tensor<T> d = with_relu ? act.backward(ctx, dy) : dy;
    return conv.backward(ctx, bn.backward(ctx, d));
  }
};

}  // namespace avfer
