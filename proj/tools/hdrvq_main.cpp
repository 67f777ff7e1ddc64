/*
 * Copyright 2026 The hdrvq Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hdrvq/hdrvq.h"

namespace {

struct ConfigDeleter {
  void operator()(hdrvq_config* c) const { hdrvq_config_destroy(c); }
};
struct BundleDeleter {
  void operator()(hdrvq_bundle* b) const { hdrvq_bundle_destroy(b); }
};

using ConfigPtr = std::unique_ptr<hdrvq_config, ConfigDeleter>;
using BundlePtr = std::unique_ptr<hdrvq_bundle, BundleDeleter>;

int fail(hdrvq_status st) {
  std::fprintf(stderr, "error: %s\n", hdrvq_last_error());
  return static_cast<int>(st);
}

// Loads the config file (or defaults) and applies --seed to the seeds the
// subcommand consumes.
ConfigPtr make_config(const std::string& config_path, const std::string& seed,
                      const std::vector<std::string>& seed_keys, hdrvq_status* st) {
  hdrvq_config* raw = nullptr;
  *st = config_path.empty() ? hdrvq_config_create(&raw)
                            : hdrvq_config_load(config_path.c_str(), &raw);
  ConfigPtr cfg(raw);
  if (*st != HDRVQ_OK) return cfg;
  if (!seed.empty()) {
    for (const auto& key : seed_keys) {
      *st = hdrvq_config_set(cfg.get(), key.c_str(), seed.c_str());
      if (*st != HDRVQ_OK) return cfg;
    }
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hdrvq - HDR-prior-guided SDR to HDR conversion toolkit"};
  app.require_subcommand(1);

  std::string config_path, seed, corpus, out, prev, log_csv, bundle_path, pristine, split = "test";
  std::string format = "hfi", md_path, phase1_ckpt;
  std::vector<std::string> inputs;
  int phase = 1;
  bool baseline = false;
  double gain = 1.3;

  auto* datagen = app.add_subcommand("datagen", "Generate a deterministic synthetic corpus");
  datagen->add_option("--config", config_path, "Config file");
  datagen->add_option("--seed", seed, "Corpus seed override");
  datagen->add_option("--out", out, "Output corpus directory")->required();

  auto* train = app.add_subcommand("train", "Train one phase");
  train->add_option("--phase", phase, "Training phase (1, 2 or 3)")->required();
  train->add_option("--config", config_path, "Config file");
  train->add_option("--seed", seed, "Phase seed override");
  train->add_option("--corpus", corpus, "Corpus directory")->required();
  train->add_option("--prev", prev, "Previous phase checkpoint (phases 2-3)");
  train->add_option("--out", out, "Output checkpoint")->required();
  train->add_option("--log", log_csv, "Per-step loss CSV");

  auto* convert = app.add_subcommand("convert", "Convert SDR images to HDR");
  convert->add_option("--bundle", bundle_path, "Phase-3 checkpoint");
  convert->add_flag("--baseline", baseline, "Use the fixed-curve baseline instead of the model");
  convert->add_option("--gain", gain, "Baseline expansion exponent");
  convert->add_option("--format", format, "Output format: hfi or pnm16");
  convert->add_option("--out", out, "Output directory")->required();
  convert->add_option("inputs", inputs, "SDR input files (.hfi or .ppm)")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Write the per-image metric report");
  evaluate->add_option("--bundle", bundle_path, "Phase-3 checkpoint")->required();
  evaluate->add_option("--corpus", corpus, "Corpus directory")->required();
  evaluate->add_option("--split", split, "Corpus split (train/val/test)");
  evaluate->add_option("--pristine", pristine, "Pristine model file")->required();
  evaluate->add_option("--out", out, "Output CSV")->required();
  evaluate->add_option("--md", md_path, "Optional markdown summary");

  auto* fit = app.add_subcommand("fit-pristine", "Fit the no-reference quality model");
  fit->add_option("--config", config_path, "Config file");
  fit->add_option("--corpus", corpus, "Corpus directory")->required();
  fit->add_option("--out", out, "Output model file")->required();

  auto* ablation = app.add_subcommand("ablation", "Train and score the component variants");
  ablation->add_option("--config", config_path, "Config file");
  ablation->add_option("--corpus", corpus, "Corpus directory")->required();
  ablation->add_option("--out", out, "Output directory")->required();
  ablation->add_option("--phase1", phase1_ckpt, "Reuse an existing phase-1 checkpoint");

  CLI11_PARSE(app, argc, argv);

  hdrvq_status st = HDRVQ_OK;
  if (datagen->parsed()) {
    ConfigPtr cfg = make_config(config_path, seed, {"corpus.seed"}, &st);
    if (st != HDRVQ_OK) return fail(st);
    st = hdrvq_datagen(cfg.get(), out.c_str());
    if (st != HDRVQ_OK) return fail(st);
    std::printf("corpus written to %s\n", out.c_str());
  } else if (train->parsed()) {
    const std::string seed_key = "phase" + std::to_string(phase) + ".seed";
    ConfigPtr cfg = make_config(config_path, seed, {seed_key}, &st);
    if (st != HDRVQ_OK) return fail(st);
    st = hdrvq_train(cfg.get(), phase, corpus.c_str(), prev.empty() ? nullptr : prev.c_str(),
                     out.c_str(), log_csv.empty() ? nullptr : log_csv.c_str());
    if (st != HDRVQ_OK) return fail(st);
    std::printf("phase %d checkpoint written to %s\n", phase, out.c_str());
  } else if (convert->parsed()) {
    BundlePtr bundle;
    if (!baseline) {
      if (bundle_path.empty()) {
        std::fprintf(stderr, "error: convert needs --bundle or --baseline\n");
        return static_cast<int>(HDRVQ_ERR_MISSING_MODEL);
      }
      hdrvq_bundle* raw = nullptr;
      st = hdrvq_bundle_load(bundle_path.c_str(), &raw);
      bundle.reset(raw);
      if (st != HDRVQ_OK) return fail(st);
    }
    std::vector<const char*> paths;
    paths.reserve(inputs.size());
    for (const auto& p : inputs) paths.push_back(p.c_str());
    int converted = 0, skipped = 0;
    st = hdrvq_convert_files(bundle.get(), paths.data(), paths.size(), out.c_str(),
                             format.c_str(), baseline ? 1 : 0, gain, &converted, &skipped);
    if (st != HDRVQ_OK) return fail(st);
    std::printf("converted %d file(s), skipped %d\n", converted, skipped);
  } else if (evaluate->parsed()) {
    hdrvq_bundle* raw = nullptr;
    st = hdrvq_bundle_load(bundle_path.c_str(), &raw);
    BundlePtr bundle(raw);
    if (st != HDRVQ_OK) return fail(st);
    st = hdrvq_evaluate(bundle.get(), corpus.c_str(), split.c_str(), pristine.c_str(),
                        out.c_str(), md_path.empty() ? nullptr : md_path.c_str());
    if (st != HDRVQ_OK) return fail(st);
    std::printf("report written to %s\n", out.c_str());
  } else if (fit->parsed()) {
    ConfigPtr cfg = make_config(config_path, seed, {}, &st);
    if (st != HDRVQ_OK) return fail(st);
    st = hdrvq_fit_pristine(cfg.get(), corpus.c_str(), out.c_str());
    if (st != HDRVQ_OK) return fail(st);
    std::printf("pristine model written to %s\n", out.c_str());
  } else if (ablation->parsed()) {
    ConfigPtr cfg = make_config(config_path, seed, {}, &st);
    if (st != HDRVQ_OK) return fail(st);
    st = hdrvq_ablation(cfg.get(), corpus.c_str(), out.c_str(),
                        phase1_ckpt.empty() ? nullptr : phase1_ckpt.c_str());
    if (st != HDRVQ_OK) return fail(st);
    std::printf("ablation table written to %s/ablation.csv\n", out.c_str());
  }
  return 0;
}
