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
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "avfer/core/gradcheck.hpp"
#include "avfer/core/ops.hpp"
#include "avfer/losses.hpp"
#include "avfer/model/gcsa.hpp"
#include "avfer/model/network.hpp"

namespace avfer {

inline constexpr double kOpTolerance = 1e-4;
inline constexpr double kCompositionTolerance = 1e-3;
inline constexpr double kReluMargin = 1e-3;

struct SuiteResult {
  GradCheckReport report;
  std::uint64_t seed = 0;
  double tolerance = kOpTolerance;
  std::size_t redraws = 0;

  bool passed() const { return report.passed(tolerance); }
};

namespace gradsuite {

using Inputs = std::vector<Tensor<double>>;

inline Tensor<double> uniform(Rng& rng, Dims dims, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(dims));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

/// Values in +-[margin, 1], so elementwise kinks at 0 are out of reach.
inline Tensor<double> away_from_zero(Rng& rng, Dims dims, double margin = 0.1) {
  Tensor<double> t(std::move(dims));
  for (auto& v : t.data()) {
    v = rng.uniform(margin, 1.0) * (rng.bernoulli(0.5) ? -1.0 : 1.0);
  }
  return t;
}

inline double min_abs(const Tensor<double>& t) {
  double m = std::numeric_limits<double>::infinity();
  for (double v : t.data()) m = std::min(m, std::abs(v));
  return m;
}

/// One suite entry. `smooth` rejects draws that sit too close to a kink.
struct Case {
  std::string name;
  double tolerance = kOpTolerance;
  std::function<DifferentiableOp()> make_op;
  std::function<Inputs(Rng&)> draw;
  std::function<bool(const Inputs&)> smooth = [](const Inputs&) { return true; };
};

struct ModuleFns {
  std::function<Tensor<double>(NetContext<double>&, const Tensor<double>&)> forward;
  std::function<Tensor<double>(NetContext<double>&, const Tensor<double>&)> backward;
};

/// Wraps a parameterized module as an op over [x, params (sorted by name)].
/// `factory` builds a fresh module per call so cached activations never leak
/// between evaluations.
inline DifferentiableOp module_op(std::string name, std::function<ModuleFns()> factory,
                                  NetState<double> proto, Mode mode,
                                  std::vector<std::string> names) {
  auto bind = [proto, names](const Inputs& in) {
    NetState<double> st = proto;
    for (std::size_t i = 0; i < names.size(); ++i) st.param(names[i]) = in[i + 1];
    return st;
  };
  DifferentiableOp op;
  op.name = std::move(name);
  op.forward = [=](const Inputs& in) {
    NetState<double> st = bind(in);
    NetContext<double> ctx{st, mode, nullptr, {}};
    return factory().forward(ctx, in[0]);
  };
  op.backward = [=](const Inputs& in, const Tensor<double>& dy) {
    NetState<double> st = bind(in);
    NamedTensors<double> grads;
    NetContext<double> ctx{st, mode, &grads, {}};
    ModuleFns fns = factory();
    fns.forward(ctx, in[0]);
    Inputs out{fns.backward(ctx, dy)};
    for (std::size_t i = 0; i < names.size(); ++i) {
      auto it = grads.find(names[i]);
      out.push_back(it == grads.end() ? Tensor<double>(in[i + 1].dims()) : it->second);
    }
    return out;
  };
  return op;
}

/// Smallest |ReLU input| of one forward pass.
inline double module_relu_margin(const std::function<ModuleFns()>& factory,
                                 NetState<double> st, Mode mode,
                                 const std::vector<std::string>& names,
                                 const Inputs& in) {
  for (std::size_t i = 0; i < names.size(); ++i) st.param(names[i]) = in[i + 1];
  NetContext<double> ctx{st, mode, nullptr, {}};
  factory().forward(ctx, in[0]);
  return ctx.min_abs_relu_input;
}

/// Builds a case for a module whose parameters are drawn by init_declared and
/// whose batch-norm running statistics are perturbed away from identity.
inline Case module_case(std::string name, double tolerance,
                        std::function<ModuleFns()> factory,
                        std::vector<ParamDecl> decls, Dims input_dims, Mode mode) {
  struct Shared {
    std::vector<std::string> names;
  };
  auto shared = std::make_shared<Shared>();
  auto proto = std::make_shared<NetState<double>>();
  auto draw_state = [decls](Rng& rng) {
    NamedTensors<double> params, buffers;
    init_declared(decls, rng.next_u64(), params, buffers);
    for (auto& [n, t] : params) {
      // Non-trivial affine BN parameters and biases.
      if (n.ends_with(".gamma")) t = uniform(rng, t.dims(), 0.5, 1.5);
      if (n.ends_with(".beta") || n.ends_with(".bias")) t = uniform(rng, t.dims(), -0.2, 0.2);
    }
    for (auto& [n, t] : buffers) {
      t = n.ends_with("running_var") ? uniform(rng, t.dims(), 0.5, 1.5)
                                     : uniform(rng, t.dims(), -0.2, 0.2);
    }
    NetState<double> st;
    st.groups.emplace_back("all", std::move(params), 0.0);
    st.buffers = std::move(buffers);
    return st;
  };

  Case c;
  c.name = name;
  c.tolerance = tolerance;
  c.draw = [=](Rng& rng) {
    *proto = draw_state(rng);
    shared->names.clear();
    Inputs in{uniform(rng, input_dims)};
    for (const auto& [n, t] : proto->groups.front().tensors) {
      shared->names.push_back(n);
      in.push_back(t);
    }
    return in;
  };
  c.smooth = [=](const Inputs& in) {
    return module_relu_margin(factory, *proto, mode, shared->names, in) > kReluMargin;
  };
  c.make_op = [=] { return module_op(name, factory, *proto, mode, shared->names); };
  return c;
}

inline DifferentiableOp unary(std::string name,
                              std::function<Tensor<double>(const Tensor<double>&)> f,
                              std::function<Tensor<double>(const Tensor<double>&,
                                                           const Tensor<double>&)>
                                  df) {
  return {std::move(name), [f](const Inputs& in) { return f(in[0]); },
          [df](const Inputs& in, const Tensor<double>& dy) { return Inputs{df(in[0], dy)}; }};
}

inline std::vector<Case> cases() {
  std::vector<Case> out;

  out.push_back({"conv2d", kOpTolerance, [] {
                   return DifferentiableOp{
                       "conv2d",
                       [](const Inputs& in) { return conv2d(in[0], in[1], in[2]); },
                       [](const Inputs& in, const Tensor<double>& dy) {
                         auto g = conv2d_backward(in[0], in[1], dy);
                         return Inputs{g.input, g.weight, g.bias};
                       }};
                 },
                 [](Rng& r) {
                   return Inputs{uniform(r, {2, 3, 5, 5}), uniform(r, {4, 3, 3, 3}),
                                 uniform(r, {4})};
                 }});

  out.push_back({"conv2d_rect", kOpTolerance, [] {
                   return DifferentiableOp{
                       "conv2d_rect",
                       [](const Inputs& in) { return conv2d(in[0], in[1], in[2]); },
                       [](const Inputs& in, const Tensor<double>& dy) {
                         auto g = conv2d_backward(in[0], in[1], dy);
                         return Inputs{g.input, g.weight, g.bias};
                       }};
                 },
                 [](Rng& r) {
                   return Inputs{uniform(r, {1, 2, 4, 6}), uniform(r, {3, 2, 1, 5}),
                                 uniform(r, {3})};
                 }});

  out.push_back({"depthwise_conv2d", kOpTolerance, [] {
                   return DifferentiableOp{
                       "depthwise_conv2d",
                       [](const Inputs& in) { return depthwise_conv2d(in[0], in[1], in[2]); },
                       [](const Inputs& in, const Tensor<double>& dy) {
                         auto g = depthwise_conv2d_backward(in[0], in[1], dy);
                         return Inputs{g.input, g.weight, g.bias};
                       }};
                 },
                 [](Rng& r) {
                   return Inputs{uniform(r, {2, 3, 5, 5}), uniform(r, {3, 1, 3, 3}),
                                 uniform(r, {3})};
                 }});

  out.push_back({"pointwise_conv", kOpTolerance, [] {
                   return DifferentiableOp{
                       "pointwise_conv",
                       [](const Inputs& in) { return pointwise_conv(in[0], in[1], in[2]); },
                       [](const Inputs& in, const Tensor<double>& dy) {
                         auto g = pointwise_conv_backward(in[0], in[1], dy);
                         return Inputs{g.input, g.weight, g.bias};
                       }};
                 },
                 [](Rng& r) {
                   return Inputs{uniform(r, {2, 3, 4, 4}), uniform(r, {5, 3, 1, 1}),
                                 uniform(r, {5})};
                 }});

  out.push_back({"linear", kOpTolerance, [] {
                   return DifferentiableOp{
                       "linear",
                       [](const Inputs& in) { return linear(in[0], in[1], in[2]); },
                       [](const Inputs& in, const Tensor<double>& dy) {
                         auto g = linear_backward(in[0], in[1], dy);
                         return Inputs{g.input, g.weight, g.bias};
                       }};
                 },
                 [](Rng& r) {
                   return Inputs{uniform(r, {4, 6}), uniform(r, {5, 6}), uniform(r, {5})};
                 }});

  for (Mode mode : {Mode::kTrain, Mode::kEval}) {
    const std::string name =
        mode == Mode::kTrain ? "batch_norm_train" : "batch_norm_eval";
    out.push_back({name, kOpTolerance,
                   [name, mode] {
                     auto run = [mode](const Inputs& in) {
                       BatchNormState<double> st{
                           Tensor<double>({2}, std::vector<double>{0.1, -0.2}),
                           Tensor<double>({2}, std::vector<double>{0.8, 1.3})};
                       return batch_norm(in[0], in[1], in[2], st, mode);
                     };
                     return DifferentiableOp{
                         name, [run](const Inputs& in) { return run(in).output; },
                         [run](const Inputs& in, const Tensor<double>& dy) {
                           auto g = batch_norm_backward(run(in).cache, in[1], dy);
                           return Inputs{g.input, g.gamma, g.beta};
                         }};
                   },
                   [](Rng& r) {
                     return Inputs{uniform(r, {3, 2, 3, 3}), uniform(r, {2}, 0.5, 1.5),
                                   uniform(r, {2})};
                   }});
  }

  out.push_back({"relu", kOpTolerance, [] {
                   return unary("relu", [](const Tensor<double>& x) { return relu(x); },
                                [](const Tensor<double>& x, const Tensor<double>& dy) {
                                  return relu_backward(x, dy);
                                });
                 },
                 [](Rng& r) { return Inputs{away_from_zero(r, {2, 3, 4, 4})}; }});

  out.push_back({"sigmoid", kOpTolerance, [] {
                   return unary("sigmoid", [](const Tensor<double>& x) { return sigmoid(x); },
                                [](const Tensor<double>& x, const Tensor<double>& dy) {
                                  return sigmoid_backward(sigmoid(x), dy);
                                });
                 },
                 [](Rng& r) { return Inputs{uniform(r, {2, 3, 4, 4}, -4.0, 4.0)}; }});

  out.push_back({"softmax", kOpTolerance, [] {
                   return unary("softmax", [](const Tensor<double>& x) { return softmax(x); },
                                [](const Tensor<double>& x, const Tensor<double>& dy) {
                                  return softmax_backward(softmax(x), dy);
                                });
                 },
                 [](Rng& r) { return Inputs{uniform(r, {3, 8}, -3.0, 3.0)}; }});

  out.push_back({"global_avg_pool", kOpTolerance, [] {
                   return unary(
                       "global_avg_pool",
                       [](const Tensor<double>& x) { return global_avg_pool(x); },
                       [](const Tensor<double>& x, const Tensor<double>& dy) {
                         return global_avg_pool_backward(x.dims(), dy);
                       });
                 },
                 [](Rng& r) { return Inputs{uniform(r, {2, 3, 4, 5})}; }});

  out.push_back({"dropout", kOpTolerance, [] {
                   auto run = [](const Tensor<double>& x) {
                     return dropout(x, 0.2, Mode::kTrain, 77);
                   };
                   return unary(
                       "dropout", [run](const Tensor<double>& x) { return run(x).output; },
                       [run](const Tensor<double>& x, const Tensor<double>& dy) {
                         return dropout_backward(run(x).mask, dy);
                       });
                 },
                 [](Rng& r) { return Inputs{uniform(r, {4, 16})}; }});

  out.push_back({"channel_shuffle", kOpTolerance, [] {
                   return unary(
                       "channel_shuffle",
                       [](const Tensor<double>& x) { return channel_shuffle(x); },
                       [](const Tensor<double>& x, const Tensor<double>& dy) {
                         (void)x;
                         return channel_shuffle_backward(dy);
                       });
                 },
                 [](Rng& r) { return Inputs{uniform(r, {2, 8, 3, 3})}; }});

  // Losses map logits [N,M] to a scalar through softmax. The coarse-fine
  // factor is piecewise constant in the logits; margins keep argmax fixed.
  auto loss_case = [](std::string name, bool coarse) {
    auto labels = std::make_shared<std::vector<std::size_t>>();
    Case c;
    c.name = name;
    c.make_op = [name, coarse, labels] {
      auto run = [coarse, labels](const Tensor<double>& logits) {
        const auto p = softmax(logits);
        return coarse ? coarse_fine_loss(p, *labels, QuadrantMap::default_map(),
                                         CoarsePenaltyMatrix::from_pairs(0.5, 0.3, 0.7,
                                                                         0.2, 0.9, 0.4))
                      : cross_entropy(p, *labels);
      };
      return unary(
          name,
          [run](const Tensor<double>& x) {
            return Tensor<double>({1}, std::vector<double>{run(x).value});
          },
          [run](const Tensor<double>& x, const Tensor<double>& dy) {
            Tensor<double> g = run(x).grad_logits;
            g *= dy[0];
            return g;
          });
    };
    c.draw = [labels](Rng& r) {
      labels->clear();
      for (int i = 0; i < 6; ++i) labels->push_back(r.uniform_int(0, 7));
      return Inputs{uniform(r, {6, 8}, -2.0, 2.0)};
    };
    c.smooth = [](const Inputs& in) {
      const auto& x = in[0];
      for (std::size_t row = 0; row < x.dim(0); ++row) {
        std::vector<double> v(x.ptr() + row * 8, x.ptr() + row * 8 + 8);
        std::sort(v.begin(), v.end());
        if (v[7] - v[6] < 0.05) return false;
      }
      return true;
    };
    return c;
  };
  out.push_back(loss_case("cross_entropy", false));
  out.push_back(loss_case("coarse_fine_loss", true));

  out.push_back({"conv2d_relu", kOpTolerance,
                 [] {
                   return DifferentiableOp{
                       "conv2d_relu",
                       [](const Inputs& in) { return relu(conv2d(in[0], in[1], in[2])); },
                       [](const Inputs& in, const Tensor<double>& dy) {
                         const auto pre = conv2d(in[0], in[1], in[2]);
                         auto g = conv2d_backward(in[0], in[1], relu_backward(pre, dy));
                         return Inputs{g.input, g.weight, g.bias};
                       }};
                 },
                 [](Rng& r) {
                   return Inputs{uniform(r, {1, 2, 5, 5}), uniform(r, {3, 2, 3, 3}),
                                 uniform(r, {3})};
                 },
                 [](const Inputs& in) {
                   return min_abs(conv2d(in[0], in[1], in[2])) > kReluMargin;
                 }});

  // Attention sub-modules, C = 8.
  auto gcsa_fns = [](int part) {
    return [part]() {
      auto g = std::make_shared<Gcsa<double>>("gcsa", 8);
      ModuleFns f;
      if (part == 0) {
        f.forward = [g](NetContext<double>& c, const Tensor<double>& x) {
          return g->channel_attention(c, x);
        };
        f.backward = [g](NetContext<double>& c, const Tensor<double>& dy) {
          return g->channel_attention_backward(c, dy);
        };
      } else if (part == 1) {
        f.forward = [g](NetContext<double>& c, const Tensor<double>& x) {
          return g->spatial_attention(c, x);
        };
        f.backward = [g](NetContext<double>& c, const Tensor<double>& dy) {
          return g->spatial_attention_backward(c, dy);
        };
      } else {
        f.forward = [g](NetContext<double>& c, const Tensor<double>& x) {
          return g->forward(c, x);
        };
        f.backward = [g](NetContext<double>& c, const Tensor<double>& dy) {
          return g->backward(c, dy);
        };
      }
      return f;
    };
  };
  std::vector<ParamDecl> gcsa_decls;
  Gcsa<double>("gcsa", 8).declare(gcsa_decls);
  out.push_back(module_case("channel_attention", kOpTolerance, gcsa_fns(0), gcsa_decls,
                            {2, 8, 4, 4}, Mode::kTrain));
  // Eval-mode BN: in train mode the bias of the conv feeding a BN has an
  // exactly zero gradient, which the relative error cannot score.
  out.push_back(module_case("spatial_attention", kOpTolerance, gcsa_fns(1), gcsa_decls,
                            {2, 8, 4, 4}, Mode::kEval));
  std::vector<ParamDecl> gcsa4_decls;
  Gcsa<double>("gcsa", 4).declare(gcsa4_decls);
  out.push_back(module_case(
      "gcsa", kCompositionTolerance,
      [] {
        auto g = std::make_shared<Gcsa<double>>("gcsa", 4);
        return ModuleFns{[g](NetContext<double>& c, const Tensor<double>& x) {
                           return g->forward(c, x);
                         },
                         [g](NetContext<double>& c, const Tensor<double>& dy) {
                           return g->backward(c, dy);
                         }};
      },
      gcsa4_decls, {1, 4, 5, 5}, Mode::kEval));

  // Full backbone + attention compositions, eval-mode batch norm.
  for (Modality m : {Modality::kAudio, Modality::kVisual}) {
    NetworkConfig cfg;
    cfg.modality = m;
    cfg.extractor.base_channels = 4;
    cfg.extractor.image_size = 8;
    cfg.extractor.mel_bins = 8;
    std::vector<ParamDecl> decls;
    for (auto& d : ModalityNet<double>(cfg).declarations()) {
      if (!d.name.starts_with("head.")) decls.push_back(d);
    }
    const bool audio = m == Modality::kAudio;
    out.push_back(module_case(
        audio ? "mcnn_gcsa" : "rhcnn_gcsa", kCompositionTolerance,
        [cfg] {
          auto net = std::make_shared<ModalityNet<double>>(cfg);
          return ModuleFns{[net](NetContext<double>& c, const Tensor<double>& x) {
                             return net->features(c, x);
                           },
                           [net](NetContext<double>& c, const Tensor<double>& dy) {
                             return net->features_backward(c, dy);
                           }};
        },
        decls, audio ? Dims{1, 1, 8, 8} : Dims{1, 3, 8, 8}, Mode::kEval));
  }
  return out;
}

}  // namespace gradsuite

/// Runs every case on `seeds` seeds. Draws that put a ReLU input (or a loss
/// argmax) within the kink margin are redrawn.
inline std::vector<SuiteResult> run_gradcheck_suite(std::size_t seeds = 5,
                                                    std::uint64_t base_seed = 0) {
  std::vector<SuiteResult> results;
  for (const auto& c : gradsuite::cases()) {
    for (std::size_t s = 0; s < seeds; ++s) {
      SuiteResult r;
      r.seed = s;
      r.tolerance = c.tolerance;
      Rng rng(mix_seed(mix_seed(base_seed, stable_hash(c.name)), s));
      constexpr std::size_t kMaxDraws = 500;
      gradsuite::Inputs in = c.draw(rng);
      while (!c.smooth(in) && r.redraws < kMaxDraws) {
        ++r.redraws;
        in = c.draw(rng);
      }
      if (r.redraws == kMaxDraws) {
        r.report.name = c.name;
        r.report.failure = "no smooth draw found";
      } else {
        r.report = grad_check(c.make_op(), std::move(in),
                              {1e-4, mix_seed(base_seed, s + 101)});
      }
      results.push_back(std::move(r));
    }
  }
  return results;
}

}  // namespace avfer
