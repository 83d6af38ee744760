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

// avfer command-line front end.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "avfer/avfer.hpp"

namespace fs = std::filesystem;
using namespace avfer;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

TrainConfig resolve_config(const Globals& g) {
  TrainConfig cfg = g.config.empty() ? TrainConfig{} : load_train_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  cfg.validate();
  return cfg;
}

fs::path prepare_out(const Globals& g) {
  const fs::path out(g.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory '" + out.string() + "': " + ec.message());
  return out;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f << j.dump(2) << '\n';
  if (!f) throw IoError("short write to '" + path.string() + "'");
}

void write_resolved(const fs::path& out, const TrainConfig& cfg) {
  write_json(out / "resolved_config.json", to_json(cfg));
}

void print_report(const EvaluationReport& r) {
  auto line = [](const char* name, const std::optional<MetricsReport>& m) {
    if (!m) return;
    std::cout << std::left << std::setw(8) << name << "macro_f1 " << std::fixed
              << std::setprecision(4) << m->macro_f1 << "  accuracy " << m->accuracy()
              << '\n';
  };
  line("audio", r.audio);
  line("visual", r.visual);
  line("fused", r.fused);
  std::cout << "ratio   " << r.ratio.m << ":" << r.ratio.n << '\n';
}

// ---------------------------------------------------------------------------

int run_synth(const Globals& g, std::size_t val_per_class) {
  const TrainConfig cfg = resolve_config(g);
  const fs::path out = prepare_out(g);
  const auto train = generate_synthetic(cfg.synth, out, cfg.seed);
  std::size_t total = train.entries.size();
  if (val_per_class > 0) {
    SynthSpec val = cfg.synth;
    val.split = "val";
    val.samples_per_class = val_per_class;
    total += generate_synthetic(val, out, mix_seed(cfg.seed, stable_hash("val"))).entries.size();
  }
  write_resolved(out, cfg);
  std::cout << "wrote " << total << " samples under " << out.string() << '\n';
  return 0;
}

int run_preprocess(const Globals& g, const std::string& manifest_path) {
  const TrainConfig cfg = resolve_config(g);
  const fs::path out = prepare_out(g);
  const auto manifest = load_manifest(manifest_path);
  Checkpoint ck;
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& e : manifest.entries) {
    auto s = prepare_sample(e, cfg);
    ck.tensors.emplace(s.id + "/mel", std::move(s.mel.values));
    ck.tensors.emplace(s.id + "/frames", std::move(s.frames));
    samples.push_back({{"id", s.id}, {"label", s.label}});
  }
  ck.metadata = {{"config", to_json(cfg)}, {"samples", samples}};
  save_checkpoint(out / "tensors.afk", ck);
  write_resolved(out, cfg);
  std::cout << "wrote " << manifest.entries.size() << " samples to "
            << (out / "tensors.afk").string() << '\n';
  return 0;
}

int run_train(const Globals& g, const std::string& manifest_path,
              const std::string& val_path) {
  const TrainConfig cfg = resolve_config(g);
  const fs::path out = prepare_out(g);
  write_resolved(out, cfg);
  const auto samples = prepare_samples(load_manifest(manifest_path), cfg);

  const fs::path log_path = out / "train_log.jsonl";
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw IoError("cannot write '" + log_path.string() + "'");
  TrainOptions opt;
  opt.on_epoch = [&](const EpochLog& l) {
    log << l.to_json().dump() << '\n' << std::flush;
    std::cout << l.to_json().dump() << '\n';
  };
  opt.warn = [](const std::string& w) { std::cerr << "warning: " << w << '\n'; };
  ModelBundle model = train(samples, cfg, opt);

  if (!val_path.empty()) {
    const auto val = evaluate(model, load_manifest(val_path));
    if (!val.ok()) throw IoError("validation manifest has unreadable samples");
    const auto search = search_ratio(val);
    model.fusion_ratio = search.best;
    write_json(out / "fusion_search.json", search.to_json());
    std::cout << "fusion ratio " << search.best.m << ":" << search.best.n << " (val macro_f1 "
              << search.best_macro_f1 << ")\n";
  }
  save_checkpoint(out / "checkpoint.afk", to_checkpoint(model));
  return 0;
}

int run_eval(const Globals& g, const std::string& checkpoint_path,
             const std::string& manifest_path, const std::string& ratio) {
  const fs::path out = prepare_out(g);
  ModelBundle model = from_checkpoint(load_checkpoint(checkpoint_path));
  if (g.seed) model.config.seed = *g.seed;
  write_resolved(out, model.config);
  std::optional<FusionRatio> r;
  if (!ratio.empty()) {
    const auto colon = ratio.find(':');
    if (colon == std::string::npos) throw ConfigError("--ratio must look like m:n");
    try {
      r = FusionRatio{std::stoi(ratio.substr(0, colon)), std::stoi(ratio.substr(colon + 1))};
    } catch (const std::logic_error&) {
      throw ConfigError("--ratio must look like m:n, got '" + ratio + "'");
    }
    r->validate();
  }
  const auto report = evaluate(model, load_manifest(manifest_path, false), r);
  write_json(out / "metrics.json", report.to_json());
  write_prob_dump(out / "audio_probs.jsonl", audio_records(report));
  write_prob_dump(out / "visual_probs.jsonl", visual_records(report));
  print_report(report);
  for (const auto& e : report.errors) std::cerr << "error: " << e.id << ": " << e.message << '\n';
  return report.ok() ? 0 : 1;
}

int run_fuse_search(const Globals& g, const std::string& audio_path,
                    const std::string& visual_path, const std::string& manifest_path) {
  const TrainConfig cfg = resolve_config(g);
  const fs::path out = prepare_out(g);
  write_resolved(out, cfg);
  std::map<std::string, std::size_t> labels;
  for (const auto& e : load_manifest(manifest_path, false).entries) labels[e.id] = e.label;
  std::map<std::string, EmotionProbVector> visual;
  for (auto& r : read_prob_dump(visual_path)) visual.emplace(r.id, std::move(r.probs));

  std::vector<EmotionProbVector> a, v;
  std::vector<std::size_t> y;
  for (auto& r : read_prob_dump(audio_path)) {
    const auto vi = visual.find(r.id);
    if (vi == visual.end()) throw ConfigError("id '" + r.id + "' missing from " + visual_path);
    const auto li = labels.find(r.id);
    if (li == labels.end()) throw ConfigError("id '" + r.id + "' missing from " + manifest_path);
    a.push_back(std::move(r.probs));
    v.push_back(vi->second);
    y.push_back(li->second);
  }
  if (a.size() != visual.size()) {
    throw ConfigError("probability dumps cover different ids");
  }
  if (a.empty()) throw ConfigError("fuse-search: empty validation set");
  const auto result = search_ratio(a, v, y, kNumClasses);
  write_json(out / "fusion_search.json", result.to_json());
  std::cout << "best ratio " << result.best.m << ":" << result.best.n << " macro_f1 "
            << result.best_macro_f1 << '\n';
  return 0;
}

int run_gradcheck(const Globals& g) {
  const TrainConfig cfg = resolve_config(g);
  const fs::path out = prepare_out(g);
  write_resolved(out, cfg);
  bool ok = true;
  nlohmann::json rows = nlohmann::json::array();
  std::cout << std::left << std::setw(20) << "op" << std::setw(6) << "seed" << std::setw(14)
            << "max_rel_err" << "status\n";
  for (const auto& r : run_gradcheck_suite(5, cfg.seed)) {
    const bool pass = r.passed();
    ok = ok && pass;
    std::cout << std::setw(20) << r.report.name << std::setw(6) << r.seed << std::setw(14)
              << std::scientific << std::setprecision(3) << r.report.max_rel_error
              << (pass ? "ok" : "FAIL " + r.report.failure) << '\n';
    rows.push_back({{"op", r.report.name},
                    {"seed", r.seed},
                    {"max_rel_error", r.report.max_rel_error},
                    {"tolerance", r.tolerance},
                    {"passed", pass}});
  }
  write_json(out / "gradcheck.json", rows);
  if (!ok) {
    std::cerr << "gradcheck: some checks failed\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio-visual emotion recognition: synthetic data, training, evaluation.",
               "avfer"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config, "JSON config (TrainConfig fields)");
  app.add_option("--seed", g.seed, "Run seed, overrides the config");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();

  std::size_t val_per_class = 4;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth->add_option("--val-per-class", val_per_class, "Validation samples per class (0: none)")
      ->capture_default_str();

  std::string manifest, val_manifest, checkpoint, ratio, audio_probs, visual_probs;
  auto* preprocess = app.add_subcommand("preprocess", "Write model-ready tensors");
  preprocess->add_option("--manifest", manifest, "Manifest JSONL")->required();

  auto* train_cmd = app.add_subcommand("train", "Train both modalities");
  train_cmd->add_option("--manifest", manifest, "Training manifest JSONL")->required();
  train_cmd->add_option("--val-manifest", val_manifest,
                        "Held-out manifest for the fusion ratio search");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--manifest", manifest, "Manifest JSONL")->required();
  eval->add_option("--ratio", ratio, "Fusion ratio m:n (default: from checkpoint, else 1:1)");

  auto* fuse_search = app.add_subcommand("fuse-search", "Grid-search the fusion ratio");
  fuse_search->add_option("--audio-probs", audio_probs, "Audio probability dump")->required();
  fuse_search->add_option("--visual-probs", visual_probs, "Visual probability dump")
      ->required();
  fuse_search->add_option("--manifest", manifest, "Manifest with the labels")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "Run the finite-difference suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "avfer: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (synth->parsed()) return run_synth(g, val_per_class);
    if (preprocess->parsed()) return run_preprocess(g, manifest);
    if (train_cmd->parsed()) return run_train(g, manifest, val_manifest);
    if (eval->parsed()) return run_eval(g, checkpoint, manifest, ratio);
    if (fuse_search->parsed()) return run_fuse_search(g, audio_probs, visual_probs, manifest);
    if (gradcheck->parsed()) return run_gradcheck(g);
  } catch (const std::exception& e) {
    std::cerr << "avfer: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
