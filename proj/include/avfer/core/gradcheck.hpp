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
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "avfer/core/rng.hpp"
#include "avfer/core/tensor.hpp"

namespace avfer {

/// Forward plus analytical backward over double tensors.
struct DifferentiableOp {
  std::string name;
  std::function<Tensor<double>(const std::vector<Tensor<double>>&)> forward;
  /// (inputs, upstream gradient) -> one gradient per input, same dims.
  std::function<std::vector<Tensor<double>>(const std::vector<Tensor<double>>&,
                                            const Tensor<double>&)>
      backward;
};

struct GradCheckReport {
  std::string name;
  std::vector<double> max_rel_error_per_input;
  double max_rel_error = 0.0;
  std::string failure;  // non-empty when the check could not run

  bool passed(double tolerance) const {
    return failure.empty() && max_rel_error < tolerance;
  }
};

struct GradCheckOptions {
  double step = 1e-4;
  std::uint64_t projection_seed = 0x5eed;
};

inline double relative_error(double analytic, double numeric) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

/// Compares the analytical backward against central finite differences of
/// the scalar <R, forward(inputs)> for a fixed random projection R. Failures
/// are reported, never thrown.
inline GradCheckReport grad_check(const DifferentiableOp& op,
                                  std::vector<Tensor<double>> inputs,
                                  const GradCheckOptions& opts = {}) {
  GradCheckReport report;
  report.name = op.name;
  try {
    const Tensor<double> out = op.forward(inputs);
    Tensor<double> projection(out.dims());
    Rng rng(opts.projection_seed);
    for (auto& v : projection.data()) v = rng.uniform(-1.0, 1.0);

    // <R, y+ - y-> / 2h, differenced per output and accumulated in extended
    // precision: outputs the perturbation leaves unchanged cancel exactly.
    auto directional = [&](const Tensor<double>& plus, const Tensor<double>& minus,
                           double step) {
      long double s = 0.0L;
      for (std::size_t i = 0; i < plus.size(); ++i) {
        s += static_cast<long double>(projection[i]) *
             (static_cast<long double>(plus[i]) - minus[i]);
      }
      return static_cast<double>(s / (2.0L * step));
    };

    const auto analytic = op.backward(inputs, projection);
    if (analytic.size() != inputs.size()) {
      report.failure = "backward returned " + std::to_string(analytic.size()) +
                       " gradients for " + std::to_string(inputs.size()) +
                       " inputs";
      return report;
    }
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      if (analytic[k].dims() != inputs[k].dims()) {
        report.failure = "gradient " + std::to_string(k) + " has dims " +
                         dims_to_string(analytic[k].dims()) + ", input has " +
                         dims_to_string(inputs[k].dims());
        return report;
      }
      double worst = 0.0;
      for (std::size_t i = 0; i < inputs[k].size(); ++i) {
        const double saved = inputs[k][i];
        inputs[k][i] = saved + opts.step;
        const Tensor<double> plus = op.forward(inputs);
        inputs[k][i] = saved - opts.step;
        const Tensor<double> minus = op.forward(inputs);
        inputs[k][i] = saved;
        const double numeric = directional(plus, minus, opts.step);
        worst = std::max(worst, relative_error(analytic[k][i], numeric));
      }
      report.max_rel_error_per_input.push_back(worst);
      report.max_rel_error = std::max(report.max_rel_error, worst);
    }
  } catch (const std::exception& e) {
    report.failure = e.what();
  }
  return report;
}

}  // namespace avfer
