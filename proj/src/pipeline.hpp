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

#ifndef HDRVQ_PIPELINE_H
#define HDRVQ_PIPELINE_H

#include <optional>

#include "fusion.hpp"
#include "image_io.hpp"
#include "metrics.hpp"
#include "scene.hpp"

namespace hdrvq {

// Process-level status; doubles as the CLI exit code.
enum class Status : int {
  Ok = 0,
  Failure = 1,
  IoFailure = 2,
  MissingPrerequisite = 3,
  MissingModel = 4,
};

class StatusError : public Error {
 public:
  StatusError(Status status, const std::string& what) : Error(what), status(status) {}
  Status status;
};

// ---- corpus ----

struct Corpus {
  std::string root;
  std::vector<CorpusEntry> entries;  // one per (scene, style)
  uint64_t config_digest = 0;

  std::vector<CorpusEntry> split(const std::string& name) const;
  // Distinct scene indices of a split, ascending.
  std::vector<int> scenes(const std::string& name) const;
  std::string hdr_path(int index) const;
  std::string sdr_path(const CorpusEntry& e) const;
};

Corpus load_corpus(const std::string& dir);

// ---- commands ----

void cmd_datagen(const RunConfig& cfg, const std::string& out_dir);

// phase in {1,2,3}; phases 2-3 require the previous phase's checkpoint.
// Writes an HFCK checkpoint and a per-step CSV loss log (empty path = none).
void cmd_train(const RunConfig& cfg, int phase, const std::string& corpus_dir,
               const std::string& prev_ckpt, const std::string& out_ckpt,
               const std::string& log_csv);

struct ConvertStats {
  int converted = 0;
  int skipped = 0;
};

// bundle may be null only in baseline mode. format: "hfi" or "pnm16".
ConvertStats cmd_convert(ModelBundle* bundle, const std::vector<std::string>& inputs,
                         const std::string& out_dir, const std::string& format, bool baseline,
                         double baseline_exponent);

void cmd_fit_pristine(const RunConfig& cfg, const std::string& corpus_dir,
                      const std::string& out_path);

// Writes per-image metric rows plus an FHAD footer; also a markdown summary
// when out_md is non-empty.
void cmd_evaluate(ModelBundle& bundle, const std::string& corpus_dir, const std::string& split,
                  const std::string& pristine_path, const std::string& out_csv,
                  const std::string& out_md);

struct AblationRow {
  std::string variant;
  double psnr = 0;
  double lphps = 0;
  double fhad = 0;
};

// Trains and evaluates the four component variants; returns the table rows
// in order (modulated encoder only / +color alignment / texture alignment
// with plain encoder / full) and writes ablation.csv + ablation.md.
std::vector<AblationRow> cmd_ablation(const RunConfig& cfg, const std::string& corpus_dir,
                                      const std::string& out_dir,
                                      const std::string& phase1_ckpt);

// ---- classic curve baseline ----

// Fixed inverse-tone-mapping curve: linearize, per-channel power-gain
// expansion onto [0,1000] nits, BT.709->BT.2020, PQ encode.
ColorImage baseline_itm(const ColorImage& sdr, double gain_exponent);

// ---- shared helpers ----

// Stacks single-image tensors [1,3,H,W] into a batch.
Tensor stack_batch(const std::vector<Tensor>& images);
// Loads an image file as a [1,3,H,W] tensor of its raw channel values.
Tensor load_tensor(const std::string& path);

}  // namespace hdrvq

#endif  // HDRVQ_PIPELINE_H
