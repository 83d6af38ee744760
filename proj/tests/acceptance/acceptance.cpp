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

// Acceptance suite: one PASS/FAIL line per criterion. An optional argument
// runs only the criteria whose name contains it.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "avfer/avfer.hpp"

namespace fs = std::filesystem;
using namespace avfer;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

class Scratch {
 public:
  explicit Scratch(const std::string& name)
      : path_(fs::temp_directory_path() / ("avfer_acceptance_" + name)) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

EmotionProbVector random_probs(Rng& rng, std::size_t m = kNumClasses) {
  std::vector<double> w(m);
  for (auto& v : w) v = -std::log(1.0 - rng.uniform());  // Dirichlet(1)
  return EmotionProbVector::normalized(std::move(w));
}

Tensor<double> random_prob_rows(Rng& rng, std::size_t n) {
  Tensor<double> p({n, kNumClasses});
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = random_probs(rng);
    for (std::size_t j = 0; j < kNumClasses; ++j) p[i * kNumClasses + j] = row[j];
  }
  return p;
}

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = run_gradcheck_suite(5);
  const double secs = seconds_since(t0);
  std::set<std::string> names;
  double worst_op = 0, worst_comp = 0;
  std::string failed;
  for (const auto& r : results) {
    names.insert(r.report.name);
    double& worst = r.tolerance == kOpTolerance ? worst_op : worst_comp;
    worst = std::max(worst, r.report.max_rel_error);
    if (!r.passed() && failed.empty()) {
      failed = r.report.name + " seed " + std::to_string(r.seed) + ": " +
               (r.report.failure.empty() ? "error " + std::to_string(r.report.max_rel_error)
                                         : r.report.failure);
    }
  }
  std::ostringstream d;
  d << names.size() << " cases x 5 seeds, worst op " << worst_op << " (< 1e-4), worst composition "
    << worst_comp << " (< 1e-3), " << secs << " s (< 60)";
  if (!failed.empty()) d << "; first failure " << failed;
  return {failed.empty() && secs < 60.0, d.str()};
}

Outcome simplex_suite() {
  Rng rng(101);
  double worst_sum = 0, worst_sym = 0, worst_scale = 0;
  bool nonneg = true;
  for (int i = 0; i < 10000; ++i) {
    const auto a = random_probs(rng), v = random_probs(rng);
    const int m = static_cast<int>(rng.uniform_int(1, 5));
    const int n = static_cast<int>(rng.uniform_int(1, 5));
    const auto f = fuse(a, v, {m, n});
    for (double x : f.values()) nonneg = nonneg && x >= 0.0;
    worst_sum = std::max(worst_sum, std::abs(f.sum() - 1.0));
    const auto g = fuse(v, a, {n, m});
    for (std::size_t k = 0; k < f.size(); ++k) {
      worst_sym = std::max(worst_sym, std::abs(f[k] - g[k]));
    }
    const int s = 5 / std::max(m, n);
    if (s >= 2) {
      const auto h = fuse(a, v, {s * m, s * n});
      for (std::size_t k = 0; k < f.size(); ++k) {
        worst_scale = std::max(worst_scale, std::abs(f[k] - h[k]));
      }
    }
  }
  std::ostringstream d;
  d << "10000 calls, nonnegative " << (nonneg ? "yes" : "no") << ", max |sum-1| "
    << worst_sum << " (<= 1e-9), symmetry " << worst_sym << ", scaling " << worst_scale
    << " (<= 1e-12)";
  return {nonneg && worst_sum <= 1e-9 && worst_sym <= 1e-12 && worst_scale <= 1e-12, d.str()};
}

Outcome shuffle_suite() {
  bool ok = true;
  std::string why;
  for (std::size_t c = 4; c <= 64; c += 4) {
    const auto perm = channel_shuffle_permutation(c, kShuffleGroups);
    std::vector<bool> hit(c, false);
    for (auto p : perm) {
      if (p < c) hit[p] = true;
    }
    Tensor<double> x({1, c, 1, 1});
    for (std::size_t k = 0; k < c; ++k) x[k] = static_cast<double>(k);
    const auto y = channel_shuffle(x);
    std::vector<bool> seen(c, false);
    for (std::size_t k = 0; k < c; ++k) {
      const auto src = static_cast<std::size_t>(y[k]);
      if (src != perm[k] || seen[src]) ok = false;
      seen[src] = true;
    }
    for (bool h : hit) ok = ok && h;
    if (!ok && why.empty()) why = "; not a bijection at C=" + std::to_string(c);
  }
  const std::vector<std::size_t> expected{0, 2, 4, 6, 1, 3, 5, 7};
  const bool order = channel_shuffle_permutation(8, kShuffleGroups) == expected;
  if (!order) why += "; C=8 order differs";
  return {ok && order, "C in {4,...,64} step 4 bijective, C=8 order [0,2,4,6,1,3,5,7]" + why};
}

Outcome loss_suite() {
  Rng rng(202);
  const auto qmap = QuadrantMap::default_map();
  const auto zero = CoarsePenaltyMatrix::uniform(0.0);
  const auto half = CoarsePenaltyMatrix::uniform(0.5);
  bool bit_equal = true, dominates = true;
  for (int b = 0; b < 1000; ++b) {
    const std::size_t n = rng.uniform_int(1, 32);
    const auto p = random_prob_rows(rng, n);
    std::vector<std::size_t> labels(n);
    for (auto& l : labels) l = rng.uniform_int(0, kNumClasses - 1);
    const auto ce = cross_entropy(p, labels);
    const auto cf0 = coarse_fine_loss(p, labels, qmap, zero);
    const auto cf = coarse_fine_loss(p, labels, qmap, half);
    bit_equal = bit_equal &&
                std::memcmp(&ce.value, &cf0.value, sizeof(double)) == 0 &&
                std::memcmp(ce.grad_logits.ptr(), cf0.grad_logits.ptr(),
                            ce.grad_logits.size() * sizeof(double)) == 0;
    dominates = dominates && cf.value >= ce.value;
  }
  Tensor<double> uniform({4, kNumClasses}, 1.0 / kNumClasses);
  const std::vector<std::size_t> labels{0, 3, 5, 7};
  const double err = std::abs(cross_entropy(uniform, labels).value - std::log(8.0));
  std::ostringstream d;
  d << "mu=0 bit-identical " << (bit_equal ? "yes" : "no") << ", CF >= CE on 1000 batches "
    << (dominates ? "yes" : "no") << ", |CE(uniform) - ln 8| " << err << " (<= 1e-9)";
  return {bit_equal && dominates && err <= 1e-9, d.str()};
}

Outcome metric_oracle() {
  Rng rng(303);
  std::size_t mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t m = rng.uniform_int(1, 8), n = rng.uniform_int(1, 300);
    std::vector<std::size_t> pred(n), label(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = rng.uniform_int(0, m - 1);
      label[i] = rng.uniform_int(0, m - 1);
    }
    const auto r = macro_f1(pred, label, m);
    double total = 0;
    bool same = true;
    for (std::size_t c = 0; c < m; ++c) {
      std::size_t tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < n; ++i) {
        tp += pred[i] == c && label[i] == c;
        fp += pred[i] == c && label[i] != c;
        fn += pred[i] != c && label[i] == c;
        if (c == 0) same = same && r.confusion[label[i]][pred[i]] > 0;
      }
      const double p = tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0;
      const double rc = tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0;
      const double f1 = p + rc > 0 ? 2 * p * rc / (p + rc) : 0.0;
      same = same && r.per_class[c].precision == p && r.per_class[c].recall == rc &&
             r.per_class[c].f1 == f1 && r.confusion[c][c] == tp;
      total += f1;
    }
    same = same && r.macro_f1 == total / static_cast<double>(m) && r.sample_count() == n;
    mismatches += !same;
  }
  return {mismatches == 0,
          "1000 random instances, " + std::to_string(mismatches) + " mismatches (exact)"};
}

Outcome overfit() {
  Scratch dir("overfit");
  const auto t0 = std::chrono::steady_clock::now();
  TrainConfig cfg;
  cfg.epochs = 200;
  const auto manifest = generate_synthetic(cfg.synth, dir.path(), cfg.seed);
  const auto samples = prepare_samples(manifest, cfg);
  const auto model = train(samples, cfg);
  const auto report = evaluate(model, manifest);
  const double secs = seconds_since(t0);
  const double a = report.audio->accuracy(), v = report.visual->accuracy();
  std::ostringstream d;
  d << manifest.entries.size() << " samples, 200 epochs: train accuracy audio " << a
    << ", visual " << v << " (>= 0.95), " << secs << " s (< 300)";
  return {a >= 0.95 && v >= 0.95 && secs < 300.0, d.str()};
}

// Audio cannot tell 2 from 3; video cannot tell 1 from 5.
SynthSpec ambiguous_spec(const std::string& split) {
  SynthSpec s;
  s.audio_confused_pairs = {{2, 3}};
  s.visual_confused_pairs = {{1, 5}};
  s.split = split;
  return s;
}

constexpr std::size_t kHeadroomEpochs = 60;

Outcome fusion_headroom() {
  Scratch dir("headroom");
  std::size_t wins = 0;
  std::ostringstream d;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.epochs = kHeadroomEpochs;
    cfg.synth = ambiguous_spec("train");
    const auto root = dir.path() / std::to_string(seed);
    const auto train_m = generate_synthetic(cfg.synth, root / "train", mix_seed(seed, 1));
    const auto val_m = generate_synthetic(ambiguous_spec("val"), root / "val", mix_seed(seed, 2));
    const auto test_m =
        generate_synthetic(ambiguous_spec("val"), root / "test", mix_seed(seed, 3));
    auto model = train(prepare_samples(train_m, cfg), cfg);
    model.fusion_ratio = search_ratio(evaluate(model, val_m)).best;
    const auto r = evaluate(model, test_m);
    const double fa = r.audio->macro_f1, fv = r.visual->macro_f1, ff = r.fused->macro_f1;
    const bool win = ff >= std::max(fa, fv);
    wins += win;
    d << (seed ? "; " : "") << "seed " << seed << " A " << fa << " V " << fv << " F " << ff
      << " (" << model.fusion_ratio->m << ":" << model.fusion_ratio->n << ")";
  }
  return {wins >= 8, std::to_string(wins) + "/10 seeds fused >= max(A, V) (>= 8); " + d.str()};
}

Outcome ablation_direction() {
  Scratch dir("ablation");
  std::size_t wins = 0;
  std::ostringstream d;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.epochs = 50;
    const auto manifest =
        generate_synthetic(cfg.synth, dir.path() / std::to_string(seed), mix_seed(seed, 7));
    const auto samples = prepare_samples(manifest, cfg);
    auto final_loss = [&](bool gcsa) {
      TrainConfig c = cfg;
      c.gcsa_enabled = gcsa;
      std::vector<EpochLog> logs;
      train(samples, c, {}, &logs);
      return logs.back().audio->loss + logs.back().visual->loss;
    };
    const double on = final_loss(true), off = final_loss(false);
    wins += on <= off;
    d << (seed ? "; " : "") << "seed " << seed << " " << on << " vs " << off;
  }
  return {wins >= 7,
          std::to_string(wins) + "/10 seeds GCSA loss <= identity loss at epoch 50 (>= 7); " +
              d.str()};
}

Outcome determinism_persistence() {
  Scratch dir("determinism");
  TrainConfig cfg;
  cfg.seed = 17;
  cfg.epochs = 5;
  const auto manifest = generate_synthetic(cfg.synth, dir.path() / "corpus", cfg.seed);
  const auto samples = prepare_samples(manifest, cfg);
  const auto a = encode_checkpoint(to_checkpoint(train(samples, cfg)));
  const auto model = train(samples, cfg);
  const auto b = encode_checkpoint(to_checkpoint(model));
  const bool identical = a == b;
  const auto path = dir.path() / "model.afk";
  save_checkpoint(path, to_checkpoint(model));
  const auto reloaded = from_checkpoint(load_checkpoint(path));
  const bool same_eval =
      evaluate(model, manifest).to_json() == evaluate(reloaded, manifest).to_json();
  std::ostringstream d;
  d << "two seed-17 runs " << (identical ? "bit-identical" : "differ") << " (" << a.size()
    << " bytes); evaluate after round trip " << (same_eval ? "unchanged" : "changed");
  return {identical && same_eval, d.str()};
}

// P(row r lies in a band) for one mask: width w uniform in {0..W}, start
// uniform in {0..H-w}.
double row_cover_probability(std::size_t h, std::size_t max_w, std::size_t r) {
  double p = 0;
  for (std::size_t w = 1; w <= max_w; ++w) {
    const std::size_t lo = r + 1 >= w ? r + 1 - w : 0, hi = std::min(r, h - w);
    if (hi >= lo) p += static_cast<double>(hi - lo + 1) / static_cast<double>(h - w + 1);
  }
  return p / static_cast<double>(max_w + 1);
}

Outcome masking_suite() {
  Rng rng(404);
  bool only_drawn = true;
  double worst_rel = 0;
  std::ostringstream d;
  for (const auto& [h, masks, max_w] : std::vector<std::tuple<std::size_t, std::size_t, std::size_t>>{
           {64, 1, 4}, {64, 2, 8}, {40, 3, 10}}) {
    const std::size_t w = 12;
    Spectrogram spec{Tensor<float>({1, 1, h, w})};
    for (auto& v : spec.values.data()) v = static_cast<float>(rng.uniform(-5.0, 5.0));
    double masked = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      const MaskSpec m{masks, max_w, seed};
      const auto bands = draw_mask_bands(h, m);
      std::vector<bool> in_band(h, false);
      for (const auto& b : bands) {
        for (std::size_t r = b.start; r < b.start + b.width; ++r) in_band[r] = true;
      }
      const auto out = frequency_mask(spec, m);
      for (std::size_t r = 0; r < h; ++r) {
        const bool changed =
            std::memcmp(out.values.ptr() + r * w, spec.values.ptr() + r * w, w * sizeof(float));
        bool filled = true;
        for (std::size_t c = 0; c < w; ++c) {
          filled = filled && out.values[r * w + c] == static_cast<float>(log_silence());
        }
        if (in_band[r] ? !filled : changed) only_drawn = false;
        masked += in_band[r];
      }
    }
    const double measured = masked / (1000.0 * h);
    double expected = 0;
    for (std::size_t r = 0; r < h; ++r) {
      expected += 1.0 - std::pow(1.0 - row_cover_probability(h, max_w, r), masks);
    }
    expected /= static_cast<double>(h);
    const double rel = std::abs(measured - expected) / expected;
    worst_rel = std::max(worst_rel, rel);
    d << "; H=" << h << " masks=" << masks << " W=" << max_w << " fraction " << measured
      << " vs " << expected;
  }
  return {only_drawn && worst_rel <= 0.2,
          std::string("only drawn rows altered ") + (only_drawn ? "yes" : "no") +
              ", worst relative deviation " + std::to_string(worst_rel) + " (<= 0.2)" + d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string filter = argc > 1 ? argv[1] : "";
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient-suite", gradient_suite},
      {"simplex-suite", simplex_suite},
      {"shuffle-suite", shuffle_suite},
      {"loss-suite", loss_suite},
      {"metric-oracle", metric_oracle},
      {"overfit", overfit},
      {"fusion-headroom", fusion_headroom},
      {"ablation-direction", ablation_direction},
      {"determinism-persistence", determinism_persistence},
      {"masking-suite", masking_suite},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    if (name.find(filter) == std::string::npos) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
