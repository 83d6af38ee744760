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

#include <filesystem>

#include "test_util.hpp"

namespace avfer {
namespace {

class TrainerTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new std::filesystem::path(std::filesystem::temp_directory_path() /
                                     "avfer_trainer_corpus");
    std::filesystem::remove_all(*dir_);
    TrainConfig cfg;
    cfg.synth.samples_per_class = 2;
    manifest_ = new DatasetManifest(generate_synthetic(cfg.synth, *dir_, 21));
    samples_ = new std::vector<PreparedSample>(prepare_samples(*manifest_, cfg));
  }
  static void TearDownTestSuite() {
    std::filesystem::remove_all(*dir_);
    delete samples_;
    delete manifest_;
    delete dir_;
  }

  static TrainConfig config(std::size_t epochs) {
    TrainConfig c;
    c.synth.samples_per_class = 2;
    c.epochs = epochs;
    c.seed = 5;
    return c;
  }

  static std::filesystem::path* dir_;
  static DatasetManifest* manifest_;
  static std::vector<PreparedSample>* samples_;
};

std::filesystem::path* TrainerTest::dir_ = nullptr;
DatasetManifest* TrainerTest::manifest_ = nullptr;
std::vector<PreparedSample>* TrainerTest::samples_ = nullptr;

TEST_F(TrainerTest, LossAtEpochThirtyBelowEpochZero) {
  std::vector<EpochLog> logs;
  train(*samples_, config(31), {}, &logs);
  ASSERT_EQ(logs.size(), 31u);
  EXPECT_LT(logs[30].audio->loss, logs[0].audio->loss);
  EXPECT_LT(logs[30].visual->loss, logs[0].visual->loss);
}

TEST_F(TrainerTest, ZeroLearningRateLeavesParametersUnchanged) {
  auto cfg = config(3);
  cfg.lr_heads = 0.0;
  cfg.lr_backbones = 0.0;
  const auto before = init_model(cfg);
  const auto after = train(*samples_, cfg);
  for (Modality m : {Modality::kAudio, Modality::kVisual}) {
    const auto& a = m == Modality::kAudio ? before.audio : before.visual;
    const auto& b = m == Modality::kAudio ? after.audio : after.visual;
    ASSERT_EQ(a.groups.size(), b.groups.size());
    for (std::size_t g = 0; g < a.groups.size(); ++g) {
      for (const auto& [name, t] : a.groups[g].tensors) {
        EXPECT_TRUE(t == b.groups[g].tensors.at(name)) << name;
      }
    }
  }
}

TEST_F(TrainerTest, TwoGroupsCarryTheirLearningRates) {
  const auto m = init_model(config(1));
  for (const auto* st : {&m.audio, &m.visual}) {
    ASSERT_EQ(st->groups.size(), 2u);
    for (const auto& g : st->groups) {
      const bool head = g.tensors.begin()->first.starts_with("head.");
      for (const auto& [name, _] : g.tensors) EXPECT_EQ(name.starts_with("head."), head) << name;
      EXPECT_EQ(g.learning_rate, 1e-2);
    }
  }
  auto cfg = config(1);
  cfg.lr_heads = 0.25;
  cfg.lr_backbones = 0.5;
  for (const auto& g : init_model(cfg).audio.groups) {
    EXPECT_EQ(g.learning_rate, g.tensors.begin()->first.starts_with("head.") ? 0.25 : 0.5);
  }
}

TEST_F(TrainerTest, SameSeedGivesBitIdenticalCheckpoints) {
  const auto a = encode_checkpoint(to_checkpoint(train(*samples_, config(2))));
  const auto b = encode_checkpoint(to_checkpoint(train(*samples_, config(2))));
  EXPECT_EQ(a, b);
  auto other = config(2);
  other.seed = 6;
  EXPECT_NE(a, encode_checkpoint(to_checkpoint(train(*samples_, other))));
}

TEST_F(TrainerTest, NoMaskNoDropoutResumeReproducesLogs) {
  auto cfg = config(4);
  cfg.masking_enabled = false;
  cfg.dropout = 0.0;
  std::vector<EpochLog> straight;
  const auto full = train(*samples_, cfg, {}, &straight);

  testing::TempDir dir;
  Trainer first(init_model(cfg), *samples_);
  first.run(2);
  save_checkpoint(dir / "half.afk", to_checkpoint(first.model()));
  Trainer second(from_checkpoint(load_checkpoint(dir / "half.afk")), *samples_);
  const auto resumed = second.run(2);
  for (std::size_t e = 0; e < 2; ++e) {
    EXPECT_EQ(resumed[e].epoch, e + 2);
    EXPECT_EQ(resumed[e].audio->loss, straight[e + 2].audio->loss);
    EXPECT_EQ(resumed[e].visual->loss, straight[e + 2].visual->loss);
  }
  EXPECT_EQ(encode_checkpoint(to_checkpoint(second.model())),
            encode_checkpoint(to_checkpoint(full)));
}

TEST_F(TrainerTest, SizeOneTailIsDroppedWithWarning) {
  auto cfg = config(1);
  cfg.batch_size = 5;  // 16 samples: 5 + 5 + 5 + 1
  std::vector<std::string> warnings;
  TrainOptions opt;
  opt.warn = [&](const std::string& w) { warnings.push_back(w); };
  std::vector<EpochLog> logs;
  train(*samples_, cfg, opt, &logs);
  EXPECT_EQ(logs[0].audio->dropped_batches, 1u);
  EXPECT_EQ(logs[0].audio->batches, 3u);
  EXPECT_EQ(logs[0].visual->dropped_batches, 1u);
  ASSERT_EQ(warnings.size(), 2u);
  EXPECT_NE(warnings[0].find("size 1"), std::string::npos);
  EXPECT_EQ(logs[0].to_json().at("audio_dropped_batches"), 1);
}

TEST_F(TrainerTest, EpochOrderIsSeededPermutation) {
  Trainer t(init_model(config(1)), *samples_);
  const auto a = t.epoch_order(0), b = t.epoch_order(1);
  EXPECT_NE(a, b);
  EXPECT_EQ(a, t.epoch_order(0));
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);
}

TEST_F(TrainerTest, RejectsMissingClassAndEmptyInput) {
  std::vector<PreparedSample> partial(samples_->begin(), samples_->end());
  std::erase_if(partial, [](const PreparedSample& s) { return s.label == 7; });
  EXPECT_THROW(Trainer(init_model(config(1)), partial), ConfigError);
  const std::vector<PreparedSample> none;
  EXPECT_THROW(Trainer(init_model(config(1)), none), ConfigError);
}

TEST_F(TrainerTest, CheckpointRoundTripPreservesEvaluate) {
  auto model = train(*samples_, config(2));
  model.fusion_ratio = FusionRatio{2, 3};
  testing::TempDir dir;
  save_checkpoint(dir / "m.afk", to_checkpoint(model));
  const auto loaded = from_checkpoint(load_checkpoint(dir / "m.afk"));
  EXPECT_EQ(loaded.epochs_completed, 2u);
  ASSERT_TRUE(loaded.fusion_ratio);
  EXPECT_EQ(*loaded.fusion_ratio, (FusionRatio{2, 3}));
  const auto a = evaluate(model, *manifest_), b = evaluate(loaded, *manifest_);
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_EQ(a.to_json().at("fusion_ratio"), nlohmann::json({2, 3}));
}

TEST_F(TrainerTest, FromCheckpointRejectsMissingAndExtraTensors) {
  auto ck = to_checkpoint(init_model(config(1)));
  auto extra = ck;
  extra.tensors.emplace("audio/stray", Tensor<float>({1}));
  EXPECT_THROW(from_checkpoint(extra), ConfigError);
  ck.tensors.erase(ck.tensors.begin());
  EXPECT_THROW(from_checkpoint(ck), ConfigError);
}

TEST_F(TrainerTest, EvaluateIsDeterministicAndEqualRatioAverages) {
  const auto model = train(*samples_, config(1));
  const auto a = evaluate(model, *manifest_), b = evaluate(model, *manifest_);
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_EQ(a.ratio, (FusionRatio{1, 1}));
  for (const auto& p : a.predictions) {
    const auto f = fuse(p.audio, p.visual, {1, 1});
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      EXPECT_DOUBLE_EQ(f[k], 0.5 * (p.audio[k] + p.visual[k]));
    }
  }
}

TEST_F(TrainerTest, EvaluateListsUnreadableSamplesAndContinues) {
  const auto model = train(*samples_, config(1));
  auto m = *manifest_;
  m.entries[3].audio_path = "/nonexistent/clip.wav";
  const auto r = evaluate(model, m);
  EXPECT_FALSE(r.ok());
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_EQ(r.errors[0].id, m.entries[3].id);
  EXPECT_NE(r.errors[0].message.find("/nonexistent/clip.wav"), std::string::npos);
  EXPECT_EQ(r.predictions.size(), m.entries.size() - 1);
  EXPECT_EQ(r.audio->sample_count(), m.entries.size() - 1);
}

TEST_F(TrainerTest, EvalModeIgnoresDropoutAndMasking) {
  auto cfg = config(1);
  const auto model = train(*samples_, cfg);
  auto changed = model;
  changed.config.dropout = 0.5;
  changed.config.masking_enabled = false;
  Predictor a(model), b(changed);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto pa = a.predict((*samples_)[i]), pb = b.predict((*samples_)[i]);
    EXPECT_EQ(pa.audio, pb.audio);
    EXPECT_EQ(pa.visual, pb.visual);
  }
}

}  // namespace
}  // namespace avfer
