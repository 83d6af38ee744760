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

#include "avfer/core/error.hpp"
#include "avfer/core/gradcheck.hpp"
#include "avfer/core/ops.hpp"
#include "avfer/core/optim.hpp"
#include "avfer/core/rng.hpp"
#include "avfer/core/tensor.hpp"
#include "avfer/fusion.hpp"
#include "avfer/gradcheck_suite.hpp"
#include "avfer/losses.hpp"
#include "avfer/metrics.hpp"
#include "avfer/model/extractors.hpp"
#include "avfer/model/gcsa.hpp"
#include "avfer/model/layers.hpp"
#include "avfer/model/network.hpp"
#include "avfer/pipeline/checkpoint.hpp"
#include "avfer/pipeline/config.hpp"
#include "avfer/pipeline/evaluate.hpp"
#include "avfer/pipeline/manifest.hpp"
#include "avfer/pipeline/synth.hpp"
#include "avfer/pipeline/trainer.hpp"
#include "avfer/preprocess/frames.hpp"
#include "avfer/preprocess/masking.hpp"
#include "avfer/preprocess/spectrogram.hpp"
#include "avfer/preprocess/wav.hpp"
