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

#include "test_util.hpp"

namespace avfer {
namespace {

ParamGroup<double> single(double w, double lr) {
  return ParamGroup<double>("g", {{"w", Tensor<double>({1}, w)}}, lr);
}

NamedTensors<double> grad(double g) { return {{"w", Tensor<double>({1}, g)}}; }

TEST(Sgd, FirstStepIsPlainGradient) {
  auto p = single(1.0, 0.1);
  sgd_step(p, grad(1.0));
  EXPECT_NEAR(p.tensors.at("w")[0], 0.9, 1e-15);
}

TEST(Sgd, SecondDecrementIncludesMomentum) {
  auto p = single(1.0, 0.1);
  sgd_step(p, grad(1.0));
  const double after_first = p.tensors.at("w")[0];
  sgd_step(p, grad(1.0));
  EXPECT_NEAR(after_first - p.tensors.at("w")[0], 0.19, 1e-15);
}

TEST(Sgd, ZeroGradientDecaysMomentumOnly) {
  auto p = single(1.0, 0.1);
  sgd_step(p, grad(2.0));
  const double w = p.tensors.at("w")[0];
  const double v = p.momentum_buffers.at("w")[0];
  p.learning_rate = 0.0;
  sgd_step(p, grad(0.0));
  EXPECT_EQ(p.tensors.at("w")[0], w);
  EXPECT_DOUBLE_EQ(p.momentum_buffers.at("w")[0], 0.9 * v);
}

TEST(Sgd, ZeroMomentumIsPlainDescent) {
  Rng rng(1);
  auto p = ParamGroup<double>("g", {{"a", testing::random_tensor<double>(rng, {3, 2})}}, 0.05);
  for (int step = 0; step < 10; ++step) {
    NamedTensors<double> g{{"a", testing::random_tensor<double>(rng, {3, 2})}};
    Tensor<double> expect = p.tensors.at("a");
    for (std::size_t i = 0; i < expect.size(); ++i) expect[i] = expect[i] - 0.05 * g.at("a")[i];
    sgd_step(p, g, 0.0);
    EXPECT_EQ(p.tensors.at("a"), expect);
  }
}

TEST(Sgd, MissingGradientIsContractError) {
  auto p = single(1.0, 0.1);
  EXPECT_THROW(sgd_step(p, {}), ContractError);
}

TEST(ParamGroup, MomentumBuffersMatchParams) {
  ParamGroup<float> p("g", {{"a", Tensor<float>({2, 3})}, {"b", Tensor<float>({4})}}, 0.1);
  for (const auto& [k, t] : p.tensors) EXPECT_EQ(p.momentum_buffers.at(k).dims(), t.dims());
}

}  // namespace
}  // namespace avfer
