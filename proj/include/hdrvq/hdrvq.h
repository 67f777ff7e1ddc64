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

/*
 * C interface of libhdrvq: HDR-prior-guided SDR-to-HDR conversion, synthetic
 * corpus generation, three-phase training, and HDR quality metrics.
 *
 * All functions that can fail return hdrvq_status; a human-readable detail
 * of the most recent failure on the calling thread is available through
 * hdrvq_last_error(). Handles are opaque and must be released with their
 * matching destroy function.
 */

#ifndef HDRVQ_HDRVQ_H
#define HDRVQ_HDRVQ_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define HDRVQ_API __declspec(dllexport)
#else
#define HDRVQ_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum hdrvq_status {
  HDRVQ_OK = 0,
  HDRVQ_ERROR = 1,                   /* unspecified failure */
  HDRVQ_ERR_IO = 2,                  /* file system failure */
  HDRVQ_ERR_MISSING_PREREQUISITE = 3, /* e.g. phase k without phase k-1 */
  HDRVQ_ERR_MISSING_MODEL = 4        /* e.g. evaluate without a pristine model */
} hdrvq_status;

typedef struct hdrvq_config hdrvq_config;
typedef struct hdrvq_bundle hdrvq_bundle;
typedef struct hdrvq_image hdrvq_image;

HDRVQ_API const char* hdrvq_version(void);
HDRVQ_API const char* hdrvq_last_error(void);

/* ---- configuration ---- */

HDRVQ_API hdrvq_status hdrvq_config_create(hdrvq_config** out);
HDRVQ_API hdrvq_status hdrvq_config_load(const char* path, hdrvq_config** out);
/* Keys are "section.key"; unknown keys fail. */
HDRVQ_API hdrvq_status hdrvq_config_set(hdrvq_config* cfg, const char* key, const char* value);
HDRVQ_API hdrvq_status hdrvq_config_get(const hdrvq_config* cfg, const char* key, char* buf,
                                        size_t buf_size);
HDRVQ_API uint64_t hdrvq_config_digest(const hdrvq_config* cfg);
HDRVQ_API void hdrvq_config_destroy(hdrvq_config* cfg);

/* ---- images ---- */

/* Reads .hfi, or binary PPM (assumed SDR BT.709 gamma). */
HDRVQ_API hdrvq_status hdrvq_image_read(const char* path, hdrvq_image** out);
HDRVQ_API hdrvq_status hdrvq_image_write_hfi(const hdrvq_image* img, const char* path);
HDRVQ_API hdrvq_status hdrvq_image_write_pnm16(const hdrvq_image* img, const char* path);
HDRVQ_API int hdrvq_image_width(const hdrvq_image* img);
HDRVQ_API int hdrvq_image_height(const hdrvq_image* img);
HDRVQ_API int hdrvq_image_gamut(const hdrvq_image* img);    /* 0 BT.709, 1 BT.2020 */
HDRVQ_API int hdrvq_image_transfer(const hdrvq_image* img); /* 0 lin, 1 PQ, 2 g2.4, 3 HLG */
HDRVQ_API const float* hdrvq_image_pixels(const hdrvq_image* img); /* H*W*3 interleaved */
HDRVQ_API void hdrvq_image_destroy(hdrvq_image* img);

/* ---- model bundles ---- */

HDRVQ_API hdrvq_status hdrvq_bundle_load(const char* path, hdrvq_bundle** out);
HDRVQ_API int hdrvq_bundle_phase(const hdrvq_bundle* bundle);
HDRVQ_API void hdrvq_bundle_destroy(hdrvq_bundle* bundle);

/* ---- pipeline commands ---- */

HDRVQ_API hdrvq_status hdrvq_datagen(const hdrvq_config* cfg, const char* out_dir);

/* phase 1..3; prev_ckpt may be NULL for phase 1; log_csv may be NULL. */
HDRVQ_API hdrvq_status hdrvq_train(const hdrvq_config* cfg, int phase, const char* corpus_dir,
                                   const char* prev_ckpt, const char* out_ckpt,
                                   const char* log_csv);

/* SDR gamma BT.709 in, PQ BT.2020 out. */
HDRVQ_API hdrvq_status hdrvq_convert_image(hdrvq_bundle* bundle, const hdrvq_image* sdr,
                                           hdrvq_image** out_hdr);
/* Classic fixed-curve expansion instead of the network. */
HDRVQ_API hdrvq_status hdrvq_convert_baseline(const hdrvq_image* sdr, double gain_exponent,
                                              hdrvq_image** out_hdr);
/* Batch file conversion; format is "hfi" or "pnm16"; inputs whose size is
 * not a multiple of 16 are skipped with a warning. bundle may be NULL in
 * baseline mode. */
HDRVQ_API hdrvq_status hdrvq_convert_files(hdrvq_bundle* bundle, const char* const* inputs,
                                           size_t input_count, const char* out_dir,
                                           const char* format, int baseline,
                                           double gain_exponent, int* converted, int* skipped);

HDRVQ_API hdrvq_status hdrvq_fit_pristine(const hdrvq_config* cfg, const char* corpus_dir,
                                          const char* out_path);

/* Writes the per-image metric CSV (plus FHAD footer) and, when out_md is
 * non-NULL, a markdown summary. */
HDRVQ_API hdrvq_status hdrvq_evaluate(hdrvq_bundle* bundle, const char* corpus_dir,
                                      const char* split, const char* pristine_path,
                                      const char* out_csv, const char* out_md);

/* Trains and evaluates the four component variants; phase1_ckpt may be NULL
 * to train phase 1 inside out_dir. */
HDRVQ_API hdrvq_status hdrvq_ablation(const hdrvq_config* cfg, const char* corpus_dir,
                                      const char* out_dir, const char* phase1_ckpt);

/* ---- single-pair metrics (PQ BT.2020 inputs) ---- */

HDRVQ_API hdrvq_status hdrvq_metric_psnr(const hdrvq_image* a, const hdrvq_image* b, double* out);
HDRVQ_API hdrvq_status hdrvq_metric_ssim(const hdrvq_image* a, const hdrvq_image* b, double* out);
HDRVQ_API hdrvq_status hdrvq_metric_delta_e_itp(const hdrvq_image* a, const hdrvq_image* b,
                                                double* out);
/* Uses the bundle's frozen encoder as the feature extractor. */
HDRVQ_API hdrvq_status hdrvq_metric_lphps(hdrvq_bundle* bundle, const hdrvq_image* a,
                                          const hdrvq_image* b, double* out);

#ifdef __cplusplus
}
#endif

#endif /* HDRVQ_HDRVQ_H */
