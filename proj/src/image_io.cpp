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

#include "image_io.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace hdrvq {

namespace {

void put_u32le(std::vector<unsigned char>& buf, uint32_t v) {
  buf.push_back(static_cast<unsigned char>(v & 0xff));
  buf.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
  buf.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
  buf.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

void put_f32le(std::vector<unsigned char>& buf, float f) {
  uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32le(buf, v);
}

uint32_t get_u32le(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

float get_f32le(const unsigned char* p) {
  uint32_t v = get_u32le(p);
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw IoError("cannot open " + path);
  const std::streamsize sz = f.tellg();
  f.seekg(0, std::ios::beg);
  std::vector<unsigned char> buf(static_cast<size_t>(sz));
  if (sz > 0 && !f.read(reinterpret_cast<char*>(buf.data()), sz))
    throw IoError("cannot read " + path);
  return buf;
}

void write_file(const std::string& path, const unsigned char* data, size_t size) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!f) throw IoError("short write: " + path);
}

}  // namespace

void write_hfi(const ColorImage& img, const std::string& path) {
  std::vector<unsigned char> buf;
  buf.reserve(18 + img.pixels.size() * 4);
  buf.insert(buf.end(), {'H', 'F', 'I', '1'});
  put_u32le(buf, static_cast<uint32_t>(img.width));
  put_u32le(buf, static_cast<uint32_t>(img.height));
  buf.push_back(static_cast<unsigned char>(img.gamut));
  buf.push_back(static_cast<unsigned char>(img.transfer));
  put_f32le(buf, img.peak_nits);
  for (float v : img.pixels) put_f32le(buf, v);
  write_file(path, buf.data(), buf.size());
}

ColorImage read_hfi(const std::string& path) {
  const std::vector<unsigned char> buf = read_file(path);
  if (buf.size() < 18 || std::memcmp(buf.data(), "HFI1", 4) != 0)
    throw IoError("bad HFI magic: " + path);
  const uint32_t w = get_u32le(buf.data() + 4);
  const uint32_t h = get_u32le(buf.data() + 8);
  const unsigned char gamut = buf[12];
  const unsigned char transfer = buf[13];
  const float peak = get_f32le(buf.data() + 14);
  if (gamut > 1) throw IoError("unknown HFI gamut tag: " + path);
  if (transfer > 3) throw IoError("unknown HFI transfer tag: " + path);
  const size_t need = 18 + static_cast<size_t>(w) * h * 3 * 4;
  if (buf.size() != need) throw IoError("truncated HFI payload: " + path);
  ColorImage img = ColorImage::make(static_cast<int>(w), static_cast<int>(h),
                                    static_cast<Gamut>(gamut), static_cast<Transfer>(transfer),
                                    peak);
  for (size_t i = 0; i < img.pixels.size(); ++i)
    img.pixels[i] = get_f32le(buf.data() + 18 + i * 4);
  return img;
}

void write_pnm16(const ColorImage& img, const std::string& path) {
  if (img.transfer == Transfer::LinearNits)
    throw IoError("write_pnm16: code-value input required, encode first");
  std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
                       "\n65535\n";
  std::vector<unsigned char> buf(header.begin(), header.end());
  buf.reserve(buf.size() + img.pixels.size() * 2);
  for (float v : img.pixels) {
    const double clipped = std::min(std::max(static_cast<double>(v), 0.0), 1.0);
    const uint32_t s = static_cast<uint32_t>(std::floor(clipped * 65535.0 + 0.5));
    buf.push_back(static_cast<unsigned char>((s >> 8) & 0xff));  // big-endian
    buf.push_back(static_cast<unsigned char>(s & 0xff));
  }
  write_file(path, buf.data(), buf.size());
}

namespace {

// Skips PNM whitespace and '#' comments, returns the next integer token.
long pnm_int(const std::vector<unsigned char>& buf, size_t& pos, const std::string& path) {
  while (pos < buf.size()) {
    if (buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else if (std::isspace(buf[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  long v = 0;
  bool any = false;
  while (pos < buf.size() && std::isdigit(buf[pos])) {
    v = v * 10 + (buf[pos] - '0');
    ++pos;
    any = true;
  }
  if (!any) throw IoError("malformed PNM header: " + path);
  return v;
}

}  // namespace

ColorImage read_pnm(const std::string& path, Gamut gamut, Transfer transfer, float peak_nits) {
  const std::vector<unsigned char> buf = read_file(path);
  if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '6')
    throw IoError("not a binary PPM: " + path);
  size_t pos = 2;
  const long w = pnm_int(buf, pos, path);
  const long h = pnm_int(buf, pos, path);
  const long maxval = pnm_int(buf, pos, path);
  if (maxval != 255 && maxval != 65535) throw IoError("unsupported PPM maxval: " + path);
  ++pos;  // single whitespace after maxval
  const size_t bytes_per = maxval == 255 ? 1 : 2;
  const size_t need = static_cast<size_t>(w) * h * 3 * bytes_per;
  if (buf.size() - pos < need) throw IoError("truncated PPM payload: " + path);
  ColorImage img = ColorImage::make(static_cast<int>(w), static_cast<int>(h), gamut, transfer,
                                    peak_nits);
  for (size_t i = 0; i < static_cast<size_t>(w) * h * 3; ++i) {
    uint32_t s;
    if (bytes_per == 1) {
      s = buf[pos + i];
    } else {
      s = (static_cast<uint32_t>(buf[pos + i * 2]) << 8) | buf[pos + i * 2 + 1];
    }
    img.pixels[i] = static_cast<float>(s) / static_cast<float>(maxval);
  }
  return img;
}

ColorImage read_image_auto(const std::string& path) {
  const size_t dot = path.find_last_of('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
  if (ext == ".hfi") return read_hfi(path);
  if (ext == ".ppm" || ext == ".pnm") return read_pnm(path);
  throw IoError("unsupported image extension: " + path);
}

uint64_t file_digest(const std::string& path) {
  const std::vector<unsigned char> buf = read_file(path);
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char b : buf) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace hdrvq
