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

#include "checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "image_io.hpp"

namespace hdrvq {

namespace {

void put_u16le(std::ofstream& f, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>(v >> 8)};
  f.write(reinterpret_cast<char*>(b), 2);
}

void put_u32le(std::ofstream& f, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  f.write(reinterpret_cast<char*>(b), 4);
}

void write_record(std::ofstream& f, const std::string& name, const Tensor& t) {
  put_u16le(f, static_cast<uint16_t>(name.size()));
  f.write(name.data(), static_cast<std::streamsize>(name.size()));
  f.put(static_cast<char>(t.ndim()));
  for (int i = 0; i < t.ndim(); ++i) put_u32le(f, static_cast<uint32_t>(t.dim(i)));
  // Little-endian float payload; memcpy through uint32 keeps this exact on
  // any host endianness.
  for (int64_t i = 0; i < t.numel(); ++i) {
    uint32_t v;
    std::memcpy(&v, t.data() + i, 4);
    put_u32le(f, v);
  }
}

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path), f_(path, std::ios::binary) {
    if (!f_) throw IoError("cannot open checkpoint: " + path);
  }
  uint16_t u16() {
    unsigned char b[2];
    read(b, 2);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
  }
  uint32_t u32() {
    unsigned char b[4];
    read(b, 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
  }
  unsigned char u8() {
    unsigned char b;
    read(&b, 1);
    return b;
  }
  void read(void* dst, size_t n) {
    if (!f_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n)))
      throw IoError("truncated checkpoint: " + path_);
  }

 private:
  std::string path_;
  std::ifstream f_;
};

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::string& config_text, int phase) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint: " + path);
  f.write("HFCK", 4);
  const uint32_t count = static_cast<uint32_t>(store.names().size()) + 2;
  put_u32le(f, count);
  for (const auto& name : store.names()) write_record(f, name, store.at(name));

  std::vector<float> cfg_bytes(config_text.size());
  for (size_t i = 0; i < config_text.size(); ++i)
    cfg_bytes[i] = static_cast<float>(static_cast<unsigned char>(config_text[i]));
  const int cfg_len = static_cast<int>(cfg_bytes.size());
  write_record(f, "__runconfig", Tensor::from_data({cfg_len}, std::move(cfg_bytes)));
  write_record(f, "__phase", Tensor::scalar(static_cast<float>(phase)));
  if (!f) throw IoError("short checkpoint write: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.read(magic, 4);
  if (std::memcmp(magic, "HFCK", 4) != 0) throw IoError("bad checkpoint magic: " + path);
  const uint32_t count = r.u32();
  LoadedCheckpoint out;
  for (uint32_t rec = 0; rec < count; ++rec) {
    const uint16_t name_len = r.u16();
    std::string name(name_len, '\0');
    r.read(name.data(), name_len);
    const int ndim = r.u8();
    Shape shape(static_cast<size_t>(ndim));
    for (int i = 0; i < ndim; ++i) shape[static_cast<size_t>(i)] = static_cast<int>(r.u32());
    const int64_t n = shape_numel(shape);
    std::vector<float> data(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
      uint32_t v = r.u32();
      std::memcpy(&data[static_cast<size_t>(i)], &v, 4);
    }
    if (name == "__runconfig") {
      out.config_text.resize(data.size());
      for (size_t i = 0; i < data.size(); ++i)
        out.config_text[i] = static_cast<char>(static_cast<unsigned char>(data[i]));
    } else if (name == "__phase") {
      out.phase = static_cast<int>(data.at(0));
    } else {
      out.store.create(name, shape) = Tensor::from_data(shape, std::move(data));
    }
  }
  return out;
}

}  // namespace hdrvq
