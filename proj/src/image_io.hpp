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

#ifndef HDRVQ_IMAGE_IO_H
#define HDRVQ_IMAGE_IO_H

#include <string>

#include "color.hpp"

namespace hdrvq {

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what) {}
};

// HFI: bit-exact float image container.
//   "HFI1" | u32-LE width | u32-LE height | u8 gamut (0=709, 1=2020)
//   | u8 transfer (0=linear, 1=PQ, 2=gamma24, 3=HLG) | f32-LE peak_nits
//   | interleaved f32-LE RGB rows, top to bottom.
void write_hfi(const ColorImage& img, const std::string& path);
ColorImage read_hfi(const std::string& path);

// Binary PPM, maxval 65535, big-endian samples, value = round(code * 65535)
// after clipping to [0,1]. Input must carry code values (PQ or Gamma24).
void write_pnm16(const ColorImage& img, const std::string& path);

// Reads binary P6 (maxval 255 or 65535); the caller supplies the signal tags
// since PPM carries none.
ColorImage read_pnm(const std::string& path, Gamut gamut = Gamut::BT709,
                    Transfer transfer = Transfer::Gamma24, float peak_nits = 100.0f);

// Reads .hfi or .ppm/.pnm by extension (PPM assumed SDR BT.709 gamma).
ColorImage read_image_auto(const std::string& path);

// FNV-1a over a file's bytes; used for determinism checks.
uint64_t file_digest(const std::string& path);

}  // namespace hdrvq

#endif  // HDRVQ_IMAGE_IO_H
