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

#include "hdrvq/hdrvq.h"

#include <cstring>
#include <string>

#include "pipeline.hpp"

// Opaque handle definitions.
struct hdrvq_config {
  hdrvq::RunConfig cfg;
};
struct hdrvq_bundle {
  hdrvq::ModelBundle bundle;
};
struct hdrvq_image {
  hdrvq::ColorImage img;
};

namespace {

thread_local std::string g_last_error;

hdrvq_status status_of(const hdrvq::Status s) { return static_cast<hdrvq_status>(s); }

// Runs `fn`, translating exceptions into status codes + the thread-local
// error message.
template <typename Fn>
hdrvq_status guarded(Fn&& fn) {
  try {
    fn();
    return HDRVQ_OK;
  } catch (const hdrvq::StatusError& e) {
    g_last_error = e.what();
    return status_of(e.status);
  } catch (const hdrvq::IoError& e) {
    g_last_error = e.what();
    return HDRVQ_ERR_IO;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return HDRVQ_ERROR;
  }
}

}  // namespace

extern "C" {

const char* hdrvq_version(void) { return "0.1.0"; }

const char* hdrvq_last_error(void) { return g_last_error.c_str(); }

hdrvq_status hdrvq_config_create(hdrvq_config** out) {
  return guarded([&] { *out = new hdrvq_config(); });
}

hdrvq_status hdrvq_config_load(const char* path, hdrvq_config** out) {
  return guarded([&] { *out = new hdrvq_config{hdrvq::RunConfig::load(path)}; });
}

hdrvq_status hdrvq_config_set(hdrvq_config* cfg, const char* key, const char* value) {
  return guarded([&] { cfg->cfg.set(key, value); });
}

hdrvq_status hdrvq_config_get(const hdrvq_config* cfg, const char* key, char* buf,
                              size_t buf_size) {
  return guarded([&] {
    const std::string& v = cfg->cfg.get(key);
    if (v.size() + 1 > buf_size) throw hdrvq::Error("buffer too small for " + std::string(key));
    std::memcpy(buf, v.c_str(), v.size() + 1);
  });
}

uint64_t hdrvq_config_digest(const hdrvq_config* cfg) { return cfg->cfg.digest(); }

void hdrvq_config_destroy(hdrvq_config* cfg) { delete cfg; }

hdrvq_status hdrvq_image_read(const char* path, hdrvq_image** out) {
  return guarded([&] { *out = new hdrvq_image{hdrvq::read_image_auto(path)}; });
}

hdrvq_status hdrvq_image_write_hfi(const hdrvq_image* img, const char* path) {
  return guarded([&] { hdrvq::write_hfi(img->img, path); });
}

hdrvq_status hdrvq_image_write_pnm16(const hdrvq_image* img, const char* path) {
  return guarded([&] { hdrvq::write_pnm16(img->img, path); });
}

int hdrvq_image_width(const hdrvq_image* img) { return img->img.width; }
int hdrvq_image_height(const hdrvq_image* img) { return img->img.height; }
int hdrvq_image_gamut(const hdrvq_image* img) { return static_cast<int>(img->img.gamut); }
int hdrvq_image_transfer(const hdrvq_image* img) { return static_cast<int>(img->img.transfer); }
const float* hdrvq_image_pixels(const hdrvq_image* img) { return img->img.pixels.data(); }
void hdrvq_image_destroy(hdrvq_image* img) { delete img; }

hdrvq_status hdrvq_bundle_load(const char* path, hdrvq_bundle** out) {
  return guarded([&] { *out = new hdrvq_bundle{hdrvq::load_bundle(path)}; });
}

int hdrvq_bundle_phase(const hdrvq_bundle* bundle) { return bundle->bundle.phase; }
void hdrvq_bundle_destroy(hdrvq_bundle* bundle) { delete bundle; }

hdrvq_status hdrvq_datagen(const hdrvq_config* cfg, const char* out_dir) {
  return guarded([&] { hdrvq::cmd_datagen(cfg->cfg, out_dir); });
}

hdrvq_status hdrvq_train(const hdrvq_config* cfg, int phase, const char* corpus_dir,
                         const char* prev_ckpt, const char* out_ckpt, const char* log_csv) {
  return guarded([&] {
    hdrvq::cmd_train(cfg->cfg, phase, corpus_dir, prev_ckpt ? prev_ckpt : "", out_ckpt,
                     log_csv ? log_csv : "");
  });
}

hdrvq_status hdrvq_convert_image(hdrvq_bundle* bundle, const hdrvq_image* sdr,
                                 hdrvq_image** out_hdr) {
  return guarded(
      [&] { *out_hdr = new hdrvq_image{hdrvq::full_forward(bundle->bundle, sdr->img)}; });
}

hdrvq_status hdrvq_convert_baseline(const hdrvq_image* sdr, double gain_exponent,
                                    hdrvq_image** out_hdr) {
  return guarded(
      [&] { *out_hdr = new hdrvq_image{hdrvq::baseline_itm(sdr->img, gain_exponent)}; });
}

hdrvq_status hdrvq_convert_files(hdrvq_bundle* bundle, const char* const* inputs,
                                 size_t input_count, const char* out_dir, const char* format,
                                 int baseline, double gain_exponent, int* converted,
                                 int* skipped) {
  return guarded([&] {
    std::vector<std::string> paths(inputs, inputs + input_count);
    hdrvq::ConvertStats st =
        hdrvq::cmd_convert(bundle ? &bundle->bundle : nullptr, paths, out_dir, format,
                           baseline != 0, gain_exponent);
    if (converted) *converted = st.converted;
    if (skipped) *skipped = st.skipped;
  });
}

hdrvq_status hdrvq_fit_pristine(const hdrvq_config* cfg, const char* corpus_dir,
                                const char* out_path) {
  return guarded([&] { hdrvq::cmd_fit_pristine(cfg->cfg, corpus_dir, out_path); });
}

hdrvq_status hdrvq_evaluate(hdrvq_bundle* bundle, const char* corpus_dir, const char* split,
                            const char* pristine_path, const char* out_csv, const char* out_md) {
  return guarded([&] {
    hdrvq::cmd_evaluate(bundle->bundle, corpus_dir, split, pristine_path, out_csv,
                        out_md ? out_md : "");
  });
}

hdrvq_status hdrvq_ablation(const hdrvq_config* cfg, const char* corpus_dir, const char* out_dir,
                            const char* phase1_ckpt) {
  return guarded([&] {
    hdrvq::cmd_ablation(cfg->cfg, corpus_dir, out_dir, phase1_ckpt ? phase1_ckpt : "");
  });
}

hdrvq_status hdrvq_metric_psnr(const hdrvq_image* a, const hdrvq_image* b, double* out) {
  return guarded([&] { *out = hdrvq::psnr(a->img, b->img); });
}

hdrvq_status hdrvq_metric_ssim(const hdrvq_image* a, const hdrvq_image* b, double* out) {
  return guarded([&] { *out = hdrvq::ssim(a->img, b->img); });
}

hdrvq_status hdrvq_metric_delta_e_itp(const hdrvq_image* a, const hdrvq_image* b, double* out) {
  return guarded([&] { *out = hdrvq::delta_e_itp(a->img, b->img).second; });
}

hdrvq_status hdrvq_metric_lphps(hdrvq_bundle* bundle, const hdrvq_image* a, const hdrvq_image* b,
                                double* out) {
  return guarded([&] {
    *out = hdrvq::lphps(bundle->bundle.store, bundle->bundle.dims, a->img, b->img);
  });
}

}  // extern "C"
