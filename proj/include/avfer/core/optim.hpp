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

#include <string>
#include <utility>

#include "avfer/core/error.hpp"
#include "avfer/core/tensor.hpp"

namespace avfer {

/// Learnable tensors sharing one learning rate, plus their momentum buffers.
template <typename T>
struct ParamGroup {
  std::string name;
  NamedTensors<T> tensors;
  double learning_rate = 0.0;
  NamedTensors<T> momentum_buffers;

  ParamGroup() = default;
  ParamGroup(std::string group_name, NamedTensors<T> params, double lr)
      : name(std::move(group_name)), tensors(std::move(params)),
        learning_rate(lr) {
    reset_momentum();
  }

  void reset_momentum() {
    momentum_buffers.clear();
    for (const auto& [key, t] : tensors) {
      momentum_buffers.emplace(key, Tensor<T>(t.dims()));
    }
  }

  bool contains(const std::string& key) const { return tensors.count(key) != 0; }
};

/// Classic momentum SGD without weight decay:
///   v <- momentum * v + g;  w <- w - lr * v
template <typename T>
void sgd_step(ParamGroup<T>& group, const NamedTensors<T>& grads,
              double momentum = 0.9) {
  for (auto& [key, param] : group.tensors) {
    auto g = grads.find(key);
    if (g == grads.end()) {
      throw ContractError("sgd_step: no gradient for parameter '" + key +
                          "' in group '" + group.name + "'");
    }
    param.require_same_dims(g->second, "sgd_step");
    auto& v = group.momentum_buffers.at(key);
    param.require_same_dims(v, "sgd_step momentum");
    const T mu = static_cast<T>(momentum);
    const T lr = static_cast<T>(group.learning_rate);
    for (std::size_t i = 0; i < param.size(); ++i) {
      v[i] = mu * v[i] + g->second[i];
      param[i] -= lr * v[i];
    }
  }
}

}  // namespace avfer
