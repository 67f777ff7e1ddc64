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

#include "pipeline.hpp"

#include "checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace hdrvq {

namespace {

// Digest of the geometry every phase must agree on (corpus + model
// sections); schedule keys may legitimately differ between phases.
uint64_t structural_digest(const RunConfig& cfg) {
  std::string text;
  std::istringstream is(cfg.canonical_text());
  std::string line, section;
  while (std::getline(is, line)) {
    if (!line.empty() && line.front() == '[') section = line;
    if (section == "[corpus]" || section == "[model]") text += line + "\n";
  }
  return fnv1a64(text.data(), text.size());
}

void check_structural_match(const RunConfig& a, const RunConfig& b, const std::string& what) {
  if (structural_digest(a) != structural_digest(b))
    throw StatusError(Status::Failure,
                      what + ": corpus/model geometry does not match the loaded artifact");
}

std::string fmt(double v, const char* spec = "%.6f") {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

StyleTag style_for(const RunConfig& cfg, uint64_t corpus_seed, int scene_index, int style_ord) {
  StyleTag tag;
  tag.style = static_cast<ToneStyle>(style_ord);
  Pcg32 rng(derive_seed(corpus_seed, 0x100000ull + static_cast<uint64_t>(scene_index) * 8 +
                                         static_cast<uint64_t>(style_ord)));
  const float ej = static_cast<float>(cfg.get_double("corpus.exposure_jitter"));
  const float sj = static_cast<float>(cfg.get_double("corpus.saturation_jitter"));
  tag.exposure = 1.0f + rng.uniform(-ej, ej);
  tag.saturation = 1.0f + rng.uniform(-sj, sj);
  return tag;
}

}  // namespace

// ---------------------------------------------------------------------------
// corpus
// ---------------------------------------------------------------------------

std::vector<CorpusEntry> Corpus::split(const std::string& name) const {
  std::vector<CorpusEntry> out;
  for (const auto& e : entries)
    if (e.split == name) out.push_back(e);
  return out;
}

std::vector<int> Corpus::scenes(const std::string& name) const {
  std::set<int> idx;
  for (const auto& e : entries)
    if (e.split == name) idx.insert(e.index);
  return {idx.begin(), idx.end()};
}

std::string Corpus::hdr_path(int index) const { return root + "/" + hdr_file_name(index); }

std::string Corpus::sdr_path(const CorpusEntry& e) const {
  return root + "/" + sdr_file_name(e.index, e.style.style);
}

Corpus load_corpus(const std::string& dir) {
  Corpus c;
  c.root = dir;
  ManifestHeader header;
  try {
    c.entries = read_manifest(dir + "/manifest.txt", &header);
  } catch (const IoError& e) {
    throw StatusError(Status::MissingPrerequisite, std::string("corpus not found: ") + e.what());
  }
  c.config_digest = header.structural_digest;
  return c;
}

// ---------------------------------------------------------------------------
// datagen
// ---------------------------------------------------------------------------

void cmd_datagen(const RunConfig& cfg, const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir + "/hdr", ec);
  fs::create_directories(out_dir + "/sdr", ec);
  if (!fs::is_directory(out_dir + "/hdr") || !fs::is_directory(out_dir + "/sdr"))
    throw StatusError(Status::IoFailure, "cannot create corpus directories under " + out_dir);

  const int n_train = static_cast<int>(cfg.get_int("corpus.train_scenes"));
  const int n_val = static_cast<int>(cfg.get_int("corpus.val_scenes"));
  const int n_test = static_cast<int>(cfg.get_int("corpus.test_scenes"));
  const uint64_t seed = cfg.get_u64("corpus.seed");
  const int total = n_train + n_val + n_test;

  std::vector<CorpusEntry> entries;
  try {
    for (int i = 0; i < total; ++i) {
      SceneSpec spec;
      spec.seed = derive_seed(seed, static_cast<uint64_t>(i));
      spec.width = static_cast<int>(cfg.get_int("corpus.width"));
      spec.height = static_cast<int>(cfg.get_int("corpus.height"));
      spec.peak_nits = static_cast<float>(cfg.get_double("corpus.peak_nits"));
      const ColorImage linear = gen_hdr_scene(spec);
      write_hfi(convert_transfer(linear, Transfer::PQ), out_dir + "/" + hdr_file_name(i));

      const std::string split = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
      for (int s = 0; s < 3; ++s) {
        CorpusEntry e;
        e.index = i;
        e.seed = spec.seed;
        e.style = style_for(cfg, seed, i, s);
        e.split = split;
        write_hfi(degrade_to_sdr(linear, e.style), out_dir + "/" + sdr_file_name(i, e.style.style));
        entries.push_back(e);
      }
    }
    write_manifest(out_dir + "/manifest.txt", entries,
                   {cfg.digest(), structural_digest(cfg)});
  } catch (const IoError& e) {
    throw StatusError(Status::IoFailure, e.what());
  }
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

Tensor load_tensor(const std::string& path) { return image_to_tensor(read_hfi(path)); }

Tensor stack_batch(const std::vector<Tensor>& images) {
  if (images.empty()) throw Error("stack_batch: empty batch");
  const int C = images[0].dim(1), H = images[0].dim(2), W = images[0].dim(3);
  Tensor out = Tensor::zeros({static_cast<int>(images.size()), C, H, W});
  const int64_t stride = static_cast<int64_t>(C) * H * W;
  for (size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != Shape{1, C, H, W}) throw ShapeError("stack_batch: shape mismatch");
    std::copy(images[i].data(), images[i].data() + stride, out.data() + i * stride);
  }
  return out;
}

namespace {

Tensor crop(const Tensor& img, int y0, int x0, int size) {
  const int C = img.dim(1), H = img.dim(2), W = img.dim(3);
  Tensor out = Tensor::zeros({1, C, size, size});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        out.data()[(static_cast<int64_t>(c) * size + y) * size + x] =
            img.data()[(static_cast<int64_t>(c) * H + (y0 + y)) * W + (x0 + x)];
  return out;
}

ModelBundle load_prerequisite(const std::string& path, int wanted_phase) {
  if (!fs::exists(path))
    throw StatusError(Status::MissingPrerequisite,
                      "missing phase-" + std::to_string(wanted_phase - 1) + " checkpoint: " + path);
  ModelBundle b = load_bundle(path);
  if (b.phase < wanted_phase - 1)
    throw StatusError(Status::MissingPrerequisite,
                      path + " holds phase " + std::to_string(b.phase) + ", need phase " +
                          std::to_string(wanted_phase - 1));
  return b;
}

class StepLog {
 public:
  StepLog(const std::string& path, const std::string& header) {
    if (path.empty()) return;
    f_.open(path, std::ios::trunc);
    if (!f_) throw StatusError(Status::IoFailure, "cannot open log: " + path);
    f_ << header << "\n";
  }
  template <typename... T>
  void row(T... cols) {
    if (!f_.is_open()) return;
    bool first = true;
    ((f_ << (first ? "" : ","), first = false, f_ << cols), ...);
    f_ << "\n";
  }

 private:
  std::ofstream f_;
};

void train_phase1(const RunConfig& cfg, const Corpus& corpus, const std::string& out_ckpt,
                  const std::string& log_csv) {
  const NetDims dims = dims_from_config(cfg);
  const std::vector<int> scenes = corpus.scenes("train");
  if (scenes.empty()) throw StatusError(Status::MissingPrerequisite, "corpus has no train split");
  std::vector<Tensor> hdr;
  hdr.reserve(scenes.size());
  for (int idx : scenes) hdr.push_back(load_tensor(corpus.hdr_path(idx)));

  ParamStore store;
  Pcg32 init_rng(derive_seed(cfg.get_u64("phase1.seed"), 1));
  build_encoder_h(store, dims, init_rng);
  build_codebook(store, dims, init_rng);
  build_decoder_h(store, dims, init_rng);
  if (cfg.get_bool("phase1.adv_enabled")) build_discriminator(store, dims, init_rng);
  store.set_trainable_prefixes({"eh.", "dh.", "cb.", "disc."});

  VqTrainState state(cfg, dims, derive_seed(cfg.get_u64("phase1.seed"), 2));
  Pcg32 batch_rng(derive_seed(cfg.get_u64("phase1.seed"), 3));
  const int steps = static_cast<int>(cfg.get_int("phase1.steps"));
  const int batch = static_cast<int>(cfg.get_int("phase1.batch"));
  const int crop_sz = static_cast<int>(cfg.get_int("phase1.crop"));
  const int H = hdr[0].dim(2), W = hdr[0].dim(3);
  const int cs = std::min({crop_sz, H, W});

  StepLog log(log_csv, "step,lr,recon_l1,codebook,commit,adv_g,adv_d,total,perplexity");
  for (int s = 0; s < steps; ++s) {
    std::vector<Tensor> items;
    items.reserve(static_cast<size_t>(batch));
    for (int b = 0; b < batch; ++b) {
      const Tensor& img = hdr[batch_rng.below(static_cast<uint32_t>(hdr.size()))];
      const int y0 = static_cast<int>(batch_rng.below(static_cast<uint32_t>(H - cs + 1)));
      const int x0 = static_cast<int>(batch_rng.below(static_cast<uint32_t>(W - cs + 1)));
      items.push_back(cs == H && cs == W ? img : crop(img, y0, x0, cs));
    }
    const float lr = state.opt.current_lr();
    VqStepLosses l = vq_train_step(store, dims, stack_batch(items), state, cfg);
    log.row(s, fmt(lr, "%.8g"), fmt(l.recon_l1), fmt(l.codebook), fmt(l.commit), fmt(l.adv_g),
            fmt(l.adv_d), fmt(l.total), fmt(l.perplexity, "%.2f"));
  }
  save_checkpoint(out_ckpt, store, cfg.canonical_text(), 1);
}

struct PairSet {
  std::vector<Tensor> sdr, hdr;  // aligned by position
};

PairSet load_pairs(const Corpus& corpus, const std::string& split) {
  PairSet ps;
  std::vector<Tensor> hdr_cache;
  std::vector<int> hdr_index;
  for (const auto& e : corpus.split(split)) {
    ps.sdr.push_back(load_tensor(corpus.sdr_path(e)));
    auto it = std::find(hdr_index.begin(), hdr_index.end(), e.index);
    if (it == hdr_index.end()) {
      hdr_cache.push_back(load_tensor(corpus.hdr_path(e.index)));
      hdr_index.push_back(e.index);
      ps.hdr.push_back(hdr_cache.back());
    } else {
      ps.hdr.push_back(hdr_cache[static_cast<size_t>(it - hdr_index.begin())]);
    }
  }
  return ps;
}

void train_phase2(const RunConfig& cfg, const Corpus& corpus, const std::string& prev_ckpt,
                  const std::string& out_ckpt, const std::string& log_csv) {
  ModelBundle bundle = load_prerequisite(prev_ckpt, 2);
  check_structural_match(cfg, bundle.config, "train phase 2");
  const NetDims dims = bundle.dims;
  const PairSet pairs = load_pairs(corpus, "train");
  if (pairs.sdr.empty()) throw StatusError(Status::MissingPrerequisite, "corpus has no train split");

  const int lh = pairs.sdr[0].dim(2) / 16, lw = pairs.sdr[0].dim(3) / 16;
  Pcg32 init_rng(derive_seed(cfg.get_u64("phase2.seed"), 10));
  build_sfm_encoder(bundle.store, dims, lh, lw, cfg.get_bool("phase2.sfm_enabled"), init_rng);
  bundle.store.set_trainable_prefixes({"sfm."});
  bundle.store.set_trainable("sfm.pos_hw", false);

  Phase2TrainState state(cfg);
  Pcg32 batch_rng(derive_seed(cfg.get_u64("phase2.seed"), 11));
  const int steps = static_cast<int>(cfg.get_int("phase2.steps"));
  const int batch = static_cast<int>(cfg.get_int("phase2.batch"));

  StepLog log(log_csv, "step,lr,latent_l2,index_ce,total");
  for (int s = 0; s < steps; ++s) {
    std::vector<Tensor> sdr, hdr;
    for (int b = 0; b < batch; ++b) {
      const uint32_t pick = batch_rng.below(static_cast<uint32_t>(pairs.sdr.size()));
      sdr.push_back(pairs.sdr[pick]);
      hdr.push_back(pairs.hdr[pick]);
    }
    const float lr = state.opt.current_lr();
    Phase2StepLosses l =
        phase2_train_step(bundle.store, dims, stack_batch(sdr), stack_batch(hdr), state, cfg);
    log.row(s, fmt(lr, "%.8g"), fmt(l.latent_l2), fmt(l.index_ce), fmt(l.total));
  }
  bundle.phase = 2;
  bundle.config = cfg;
  save_bundle(out_ckpt, bundle);
}

void train_phase3(const RunConfig& cfg, const Corpus& corpus, const std::string& prev_ckpt,
                  const std::string& out_ckpt, const std::string& log_csv) {
  ModelBundle bundle = load_prerequisite(prev_ckpt, 3);
  check_structural_match(cfg, bundle.config, "train phase 3");
  const NetDims dims = bundle.dims;
  const PairSet pairs = load_pairs(corpus, "train");
  if (pairs.sdr.empty()) throw StatusError(Status::MissingPrerequisite, "corpus has no train split");

  Pcg32 init_rng(derive_seed(cfg.get_u64("phase3.seed"), 20));
  if (!bundle.store.has("hca.bp0.w"))
    build_hca(bundle.store, dims, cfg.get_bool("phase3.hca_bias_path"), init_rng);
  if (!bundle.store.has("sta.l0.off1.w")) build_sta(bundle.store, dims, init_rng);
  std::vector<std::string> prefixes;
  if (cfg.get_bool("phase3.hca_enabled")) prefixes.push_back("hca.");
  if (cfg.get_bool("phase3.sta_enabled")) prefixes.push_back("sta.");
  if (cfg.get_bool("phase3.finetune_esfm")) prefixes.push_back("sfm.");
  bundle.store.set_trainable_prefixes(prefixes);
  if (bundle.store.has("sfm.pos_hw")) bundle.store.set_trainable("sfm.pos_hw", false);

  Phase3TrainState state(cfg);
  Pcg32 batch_rng(derive_seed(cfg.get_u64("phase3.seed"), 21));
  const int steps = static_cast<int>(cfg.get_int("phase3.steps"));
  const int batch = static_cast<int>(cfg.get_int("phase3.batch"));

  StepLog log(log_csv, "step,lr,l1,lphps,total");
  for (int s = 0; s < steps; ++s) {
    std::vector<Tensor> sdr, hdr;
    for (int b = 0; b < batch; ++b) {
      const uint32_t pick = batch_rng.below(static_cast<uint32_t>(pairs.sdr.size()));
      sdr.push_back(pairs.sdr[pick]);
      hdr.push_back(pairs.hdr[pick]);
    }
    const float lr = state.opt.current_lr();
    Phase3StepLosses l =
        phase3_train_step(bundle.store, dims, stack_batch(sdr), stack_batch(hdr), state, cfg);
    log.row(s, fmt(lr, "%.8g"), fmt(l.l1), fmt(l.lphps), fmt(l.total));
  }
  bundle.phase = 3;
  bundle.config = cfg;
  save_bundle(out_ckpt, bundle);
}

}  // namespace

void cmd_train(const RunConfig& cfg, int phase, const std::string& corpus_dir,
               const std::string& prev_ckpt, const std::string& out_ckpt,
               const std::string& log_csv) {
  Corpus corpus = load_corpus(corpus_dir);
  if (corpus.config_digest != 0 && corpus.config_digest != structural_digest(cfg))
    throw StatusError(Status::Failure,
                      "train: config corpus/model geometry does not match the corpus manifest");
  switch (phase) {
    case 1:
      train_phase1(cfg, corpus, out_ckpt, log_csv);
      break;
    case 2:
      train_phase2(cfg, corpus, prev_ckpt, out_ckpt, log_csv);
      break;
    case 3:
      train_phase3(cfg, corpus, prev_ckpt, out_ckpt, log_csv);
      break;
    default:
      throw StatusError(Status::Failure, "train: phase must be 1, 2 or 3");
  }
}

// ---------------------------------------------------------------------------
// convert
// ---------------------------------------------------------------------------

ColorImage baseline_itm(const ColorImage& sdr, double gain_exponent) {
  if (sdr.transfer != Transfer::Gamma24)
    throw Error("baseline_itm: expects an SDR gamma image");
  ColorImage lin = ColorImage::make(sdr.width, sdr.height, sdr.gamut, Transfer::LinearNits,
                                    1000.0f);
  for (size_t i = 0; i < sdr.pixels.size(); ++i) {
    const double rel = gamma_eotf(sdr.pixels[i]) / 100.0;  // diffuse-white relative
    lin.pixels[i] = static_cast<float>(1000.0 * std::pow(rel, gain_exponent));
  }
  ColorImage wide = gamut_convert(lin, Gamut::BT2020);
  for (auto& v : wide.pixels) v = std::max(v, 0.0f);
  wide.out_of_gamut = false;
  return convert_transfer(wide, Transfer::PQ);
}

ConvertStats cmd_convert(ModelBundle* bundle, const std::vector<std::string>& inputs,
                         const std::string& out_dir, const std::string& format, bool baseline,
                         double baseline_exponent) {
  if (!baseline && (!bundle || bundle->phase < 3))
    throw StatusError(Status::MissingModel, "convert: a phase-3 bundle is required");
  if (format != "hfi" && format != "pnm16")
    throw StatusError(Status::Failure, "convert: format must be hfi or pnm16");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir))
    throw StatusError(Status::IoFailure, "cannot create output dir: " + out_dir);

  ConvertStats stats;
  for (const auto& path : inputs) {
    ColorImage sdr;
    try {
      sdr = read_image_auto(path);
    } catch (const IoError& e) {
      std::fprintf(stderr, "convert: skipping %s: %s\n", path.c_str(), e.what());
      ++stats.skipped;
      continue;
    }
    if (sdr.width % 16 != 0 || sdr.height % 16 != 0) {
      std::fprintf(stderr, "convert: skipping %s: size %dx%d is not a multiple of 16\n",
                   path.c_str(), sdr.width, sdr.height);
      ++stats.skipped;
      continue;
    }
    const ColorImage out = baseline ? baseline_itm(sdr, baseline_exponent)
                                    : full_forward(*bundle, sdr);
    const std::string stem = fs::path(path).stem().string();
    if (format == "hfi")
      write_hfi(out, out_dir + "/" + stem + "_hdr.hfi");
    else
      write_pnm16(out, out_dir + "/" + stem + "_hdr.ppm");
    ++stats.converted;
  }
  if (stats.converted == 0 && !inputs.empty())
    throw StatusError(Status::IoFailure, "convert: no input could be converted");
  return stats;
}

// ---------------------------------------------------------------------------
// pristine fit + evaluation
// ---------------------------------------------------------------------------

void cmd_fit_pristine(const RunConfig& cfg, const std::string& corpus_dir,
                      const std::string& out_path) {
  Corpus corpus = load_corpus(corpus_dir);
  const std::vector<int> scenes = corpus.scenes("train");
  const int64_t want = cfg.get_int("eval.pristine_images");
  const size_t count = std::min<size_t>(scenes.size(), static_cast<size_t>(want));
  std::vector<ColorImage> images;
  images.reserve(count);
  std::vector<const ColorImage*> ptrs;
  for (size_t i = 0; i < count; ++i) {
    images.push_back(read_hfi(corpus.hdr_path(scenes[i])));
    ptrs.push_back(&images.back());
  }
  const PristineModel model = fit_pristine_model(ptrs);
  save_pristine_model(out_path, model, cfg.canonical_text());
}

void cmd_evaluate(ModelBundle& bundle, const std::string& corpus_dir, const std::string& split,
                  const std::string& pristine_path, const std::string& out_csv,
                  const std::string& out_md) {
  if (bundle.phase < 3)
    throw StatusError(Status::MissingPrerequisite, "evaluate: bundle has not finished phase 3");
  if (!fs::exists(pristine_path))
    throw StatusError(Status::MissingModel,
                      "evaluate: pristine model not found at " + pristine_path +
                          " (run the fit-pristine subcommand first)");
  const PristineModel pristine = load_pristine_model(pristine_path);
  Corpus corpus = load_corpus(corpus_dir);
  const std::vector<CorpusEntry> entries = corpus.split(split);
  if (entries.empty())
    throw StatusError(Status::MissingPrerequisite, "evaluate: split has no entries: " + split);

  std::ofstream csv(out_csv, std::ios::trunc);
  if (!csv) throw StatusError(Status::IoFailure, "cannot write report: " + out_csv);
  char digest_hex[32];
  std::snprintf(digest_hex, sizeof digest_hex, "%016llx",
                static_cast<unsigned long long>(bundle.config.digest()));
  csv << "# config_digest=" << digest_hex << "\n";
  csv << "image_id,psnr,ssim,de_itp,lphps,nhqe\n";

  std::vector<std::vector<double>> feats_out, feats_gt;
  double sums[5] = {0, 0, 0, 0, 0};
  int64_t psnr_finite = 0;
  for (const auto& e : entries) {
    const ColorImage sdr = read_hfi(corpus.sdr_path(e));
    const ColorImage gt = read_hfi(corpus.hdr_path(e.index));
    const ColorImage out = full_forward(bundle, sdr);
    const double v_psnr = psnr(out, gt);
    const double v_ssim = ssim(out, gt);
    const double v_de = delta_e_itp(out, gt).second;
    const double v_lphps = lphps(bundle.store, bundle.dims, out, gt);
    const double v_nhqe = nhqe(out, pristine);
    char id[64];
    std::snprintf(id, sizeof id, "%05d_%s", e.index, tone_style_name(e.style.style));
    csv << id << "," << fmt(v_psnr) << "," << fmt(v_ssim) << "," << fmt(v_de) << ","
        << fmt(v_lphps) << "," << fmt(v_nhqe) << "\n";
    if (std::isfinite(v_psnr)) {
      sums[0] += v_psnr;
      ++psnr_finite;
    }
    sums[1] += v_ssim;
    sums[2] += v_de;
    sums[3] += v_lphps;
    sums[4] += v_nhqe;
    feats_out.push_back(deep_features(bundle.store, bundle.dims, out));
    feats_gt.push_back(deep_features(bundle.store, bundle.dims, gt));
  }
  const double corpus_fhad = fhad(feature_stats(feats_out), feature_stats(feats_gt));
  csv << "FHAD," << fmt(corpus_fhad) << ",,,,\n";
  if (!csv) throw StatusError(Status::IoFailure, "short report write: " + out_csv);
  csv.close();

  if (!out_md.empty()) {
    std::ofstream md(out_md, std::ios::trunc);
    if (!md) throw StatusError(Status::IoFailure, "cannot write summary: " + out_md);
    const double n = static_cast<double>(entries.size());
    md << "| images | PSNR | SSIM | dE_ITP | LPHPS | NHQE | FHAD |\n";
    md << "|---|---|---|---|---|---|---|\n";
    md << "| " << entries.size() << " | "
       << fmt(psnr_finite ? sums[0] / static_cast<double>(psnr_finite) : 0.0, "%.2f") << " | "
       << fmt(sums[1] / n, "%.4f") << " | " << fmt(sums[2] / n, "%.3f") << " | "
       << fmt(sums[3] / n, "%.4f") << " | " << fmt(sums[4] / n, "%.3f") << " | "
       << fmt(corpus_fhad, "%.3f") << " |\n";
  }
}

// ---------------------------------------------------------------------------
// ablation
// ---------------------------------------------------------------------------

namespace {

AblationRow evaluate_variant(const std::string& name, ModelBundle& bundle, const Corpus& corpus) {
  const std::vector<CorpusEntry> entries = corpus.split("test");
  std::vector<std::vector<double>> feats_out, feats_gt;
  double sum_psnr = 0, sum_lphps = 0;
  int64_t n_finite = 0;
  for (const auto& e : entries) {
    const ColorImage sdr = read_hfi(corpus.sdr_path(e));
    const ColorImage gt = read_hfi(corpus.hdr_path(e.index));
    const ColorImage out = full_forward(bundle, sdr);
    const double v = psnr(out, gt);
    if (std::isfinite(v)) {
      sum_psnr += v;
      ++n_finite;
    }
    sum_lphps += lphps(bundle.store, bundle.dims, out, gt);
    feats_out.push_back(deep_features(bundle.store, bundle.dims, out));
    feats_gt.push_back(deep_features(bundle.store, bundle.dims, gt));
  }
  AblationRow row;
  row.variant = name;
  row.psnr = n_finite ? sum_psnr / static_cast<double>(n_finite) : 0.0;
  row.lphps = sum_lphps / static_cast<double>(entries.size());
  row.fhad = fhad(feature_stats(feats_out), feature_stats(feats_gt));
  return row;
}

}  // namespace

std::vector<AblationRow> cmd_ablation(const RunConfig& cfg, const std::string& corpus_dir,
                                      const std::string& out_dir,
                                      const std::string& phase1_ckpt) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir))
    throw StatusError(Status::IoFailure, "cannot create ablation dir: " + out_dir);
  Corpus corpus = load_corpus(corpus_dir);

  std::string p1 = phase1_ckpt;
  if (p1.empty()) {
    p1 = out_dir + "/phase1.hfck";
    if (!fs::exists(p1)) cmd_train(cfg, 1, corpus_dir, "", p1, out_dir + "/phase1_log.csv");
  }

  // Shared phase-2 encoders: modulated and plain.
  const std::string p2_mod = out_dir + "/phase2_sfm.hfck";
  RunConfig cfg_mod = cfg;
  cfg_mod.set("phase2.sfm_enabled", "true");
  if (!fs::exists(p2_mod)) cmd_train(cfg_mod, 2, corpus_dir, p1, p2_mod, "");
  const std::string p2_plain = out_dir + "/phase2_plain.hfck";
  RunConfig cfg_plain = cfg;
  cfg_plain.set("phase2.sfm_enabled", "false");
  if (!fs::exists(p2_plain)) cmd_train(cfg_plain, 2, corpus_dir, p1, p2_plain, "");

  struct VariantSpec {
    const char* name;
    const char* phase2;
    bool hca, sta;
  };
  // Every variant fine-tunes the encoder in phase 3 so rows differ only by
  // the alignment components.
  const VariantSpec variants[] = {
      {"esfm_only", "sfm", false, false},
      {"esfm_hca", "sfm", true, false},
      {"hca_sta_plain", "plain", true, true},
      {"full", "sfm", true, true},
  };

  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    RunConfig vcfg = cfg;
    vcfg.set("phase3.hca_enabled", v.hca ? "true" : "false");
    vcfg.set("phase3.sta_enabled", v.sta ? "true" : "false");
    vcfg.set("phase3.finetune_esfm", "true");
    const std::string p2 = std::string(out_dir) + "/phase2_" + v.phase2 + ".hfck";
    const std::string p3 = std::string(out_dir) + "/phase3_" + v.name + ".hfck";
    if (!fs::exists(p3)) cmd_train(vcfg, 3, corpus_dir, p2, p3, "");
    ModelBundle bundle = load_bundle(p3);
    rows.push_back(evaluate_variant(v.name, bundle, corpus));
  }

  std::ofstream csv(out_dir + "/ablation.csv", std::ios::trunc);
  std::ofstream md(out_dir + "/ablation.md", std::ios::trunc);
  if (!csv || !md) throw StatusError(Status::IoFailure, "cannot write ablation outputs");
  csv << "variant,psnr,lphps,fhad\n";
  md << "| variant | PSNR | LPHPS | FHAD |\n|---|---|---|---|\n";
  for (const auto& r : rows) {
    csv << r.variant << "," << fmt(r.psnr) << "," << fmt(r.lphps) << "," << fmt(r.fhad) << "\n";
    md << "| " << r.variant << " | " << fmt(r.psnr, "%.2f") << " | " << fmt(r.lphps, "%.4f")
       << " | " << fmt(r.fhad, "%.3f") << " |\n";
  }
  return rows;
}

}  // namespace hdrvq
