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

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "avfer/fusion.hpp"
#include "avfer/metrics.hpp"
#include "avfer/pipeline/trainer.hpp"

namespace avfer {

struct SamplePrediction {
  std::string id;
  std::size_t label = 0;
  EmotionProbVector audio;
  EmotionProbVector visual;
};

/// Eval-mode inference for one modality: no dropout, no masking, BN running
/// statistics.
class Predictor {
 public:
  explicit Predictor(const ModelBundle& model)
      : model_(model),
        audio_net_(network_config(model.config, Modality::kAudio)),
        visual_net_(network_config(model.config, Modality::kVisual)) {}

  EmotionProbVector audio(const Spectrogram& mel) {
    NetState<float> st = model_.audio;
    NetContext<float> ctx{st, Mode::kEval, nullptr, bn()};
    const Tensor<float> p = softmax(audio_net_.forward(ctx, mel.values));
    return clip_probs(p, 1).front();
  }

  EmotionProbVector visual(const Tensor<float>& frames) {
    NetState<float> st = model_.visual;
    NetContext<float> ctx{st, Mode::kEval, nullptr, bn()};
    return clip_probs(softmax(visual_net_.forward(ctx, frames)), 1).front();
  }

  SamplePrediction predict(const PreparedSample& s) {
    return {s.id, s.label, audio(s.mel), visual(s.frames)};
  }

 private:
  BatchNormOptions bn() const {
    return {model_.config.bn_epsilon, model_.config.bn_momentum};
  }

  const ModelBundle& model_;
  ModalityNet<float> audio_net_;
  ModalityNet<float> visual_net_;
};

struct SampleError {
  std::string id;
  std::string message;
};

struct EvaluationReport {
  std::optional<MetricsReport> audio;
  std::optional<MetricsReport> visual;
  std::optional<MetricsReport> fused;
  FusionRatio ratio;
  std::vector<SamplePrediction> predictions;
  std::vector<SampleError> errors;

  bool ok() const { return errors.empty(); }

  nlohmann::json to_json() const {
    auto metrics = [](const std::optional<MetricsReport>& r) {
      return r ? r->to_json() : nlohmann::json(nullptr);
    };
    nlohmann::json errs = nlohmann::json::array();
    for (const auto& e : errors) errs.push_back({{"id", e.id}, {"error", e.message}});
    return {{"audio", metrics(audio)},
            {"visual", metrics(visual)},
            {"fused", metrics(fused)},
            {"fusion_ratio", {ratio.m, ratio.n}},
            {"samples", predictions.size()},
            {"errors", errs}};
  }
};

/// Scores predictions with the given ratio.
inline EvaluationReport score_predictions(std::vector<SamplePrediction> preds,
                                          FusionRatio ratio) {
  ratio.validate();
  EvaluationReport r;
  r.ratio = ratio;
  if (!preds.empty()) {
    std::vector<std::size_t> labels, pa, pv, pf;
    for (const auto& p : preds) {
      labels.push_back(p.label);
      pa.push_back(p.audio.argmax());
      pv.push_back(p.visual.argmax());
      pf.push_back(fuse(p.audio, p.visual, ratio).argmax());
    }
    r.audio = macro_f1(pa, labels, kNumClasses);
    r.visual = macro_f1(pv, labels, kNumClasses);
    r.fused = macro_f1(pf, labels, kNumClasses);
  }
  r.predictions = std::move(preds);
  return r;
}

/// Runs every manifest entry; entries whose files cannot be read are listed
/// in `errors` and skipped. The ratio defaults to the checkpoint's searched
/// ratio, else (1, 1).
inline EvaluationReport evaluate(const ModelBundle& model, const DatasetManifest& manifest,
                                 std::optional<FusionRatio> ratio = std::nullopt) {
  Predictor predictor(model);
  std::vector<SamplePrediction> preds;
  std::vector<SampleError> errors;
  for (const auto& e : manifest.entries) {
    try {
      preds.push_back(predictor.predict(prepare_sample(e, model.config)));
    } catch (const Error& ex) {
      errors.push_back({e.id, ex.what()});
    }
  }
  auto r = score_predictions(std::move(preds),
                             ratio.value_or(model.fusion_ratio.value_or(FusionRatio{})));
  r.errors = std::move(errors);
  return r;
}

inline std::vector<ProbRecord> audio_records(const EvaluationReport& r) {
  std::vector<ProbRecord> out;
  for (const auto& p : r.predictions) out.push_back({p.id, p.audio});
  return out;
}

inline std::vector<ProbRecord> visual_records(const EvaluationReport& r) {
  std::vector<ProbRecord> out;
  for (const auto& p : r.predictions) out.push_back({p.id, p.visual});
  return out;
}

/// Grid-searches the fusion ratio on the predictions of a report.
inline RatioSearchResult search_ratio(const EvaluationReport& r) {
  std::vector<EmotionProbVector> a, v;
  std::vector<std::size_t> labels;
  for (const auto& p : r.predictions) {
    a.push_back(p.audio);
    v.push_back(p.visual);
    labels.push_back(p.label);
  }
  return search_ratio(a, v, labels, kNumClasses);
}

}  // namespace avfer
