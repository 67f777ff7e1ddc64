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

#ifndef HDRVQ_CONFIG_H
#define HDRVQ_CONFIG_H

#include <cstdint>
#include <map>
#include <string>

#include "tensor.hpp"

namespace hdrvq {

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

// Flat `key = value` configuration with [section] headers. Every key must
// exist in the built-in schema; unknown keys are hard errors. The canonical
// serialization (sections and keys sorted) is embedded into every artifact
// and digested for provenance checks.
class RunConfig {
 public:
  RunConfig();  // schema defaults

  static RunConfig load(const std::string& path);
  static RunConfig parse(const std::string& text);

  void set(const std::string& dotted_key, const std::string& value);
  const std::string& get(const std::string& dotted_key) const;

  int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  uint64_t get_u64(const std::string& key) const;

  std::string canonical_text() const;
  uint64_t digest() const;  // FNV-1a over canonical_text()

 private:
  std::map<std::string, std::string> values_;  // "section.key" -> value
};

uint64_t fnv1a64(const void* data, size_t size);

}  // namespace hdrvq

#endif  // HDRVQ_CONFIG_H
