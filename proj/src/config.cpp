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

#include "config.hpp"

#include <fstream>
#include <sstream>

namespace hdrvq {

namespace {

struct SchemaEntry {
  const char* key;
  const char* default_value;
};

// Desk-scale defaults. Step counts and learning rates are sized so the full
// three-phase pipeline trains on a laptop-class CPU; corpus geometry and
// model dimensions follow the documented defaults (n=256, d=64, width 1/4
// of the 64..512 schedule).
const SchemaEntry kSchema[] = {
    {"corpus.seed", "17"},
    {"corpus.train_scenes", "500"},
    {"corpus.val_scenes", "50"},
    {"corpus.test_scenes", "50"},
    {"corpus.width", "64"},
    {"corpus.height", "64"},
    {"corpus.peak_nits", "1000"},
    {"corpus.exposure_jitter", "0.15"},
    {"corpus.saturation_jitter", "0.1"},

    {"model.codebook_size", "256"},
    {"model.codebook_dim", "64"},
    {"model.base_channels", "16"},

    {"phase1.steps", "3000"},
    {"phase1.batch", "4"},
    {"phase1.crop", "32"},
    {"phase1.lr", "1e-3"},
    {"phase1.beta_commit", "0.25"},
    {"phase1.adv_enabled", "false"},
    {"phase1.adv_weight", "0.1"},
    {"phase1.adv_warmup", "2000"},
    {"phase1.revive_interval", "1000"},
    {"phase1.seed", "1009"},

    {"phase2.steps", "800"},
    {"phase2.batch", "4"},
    {"phase2.lr", "1e-3"},
    {"phase2.lambda_ce", "0.5"},
    {"phase2.sfm_enabled", "true"},
    {"phase2.seed", "1009"},

    {"phase3.steps", "400"},
    {"phase3.batch", "2"},
    {"phase3.lr", "5e-4"},
    {"phase3.lambda_lphps", "0.1"},
    {"phase3.soft_k", "4"},
    {"phase3.tau", "1.0"},
    {"phase3.hca_enabled", "true"},
    {"phase3.sta_enabled", "true"},
    {"phase3.finetune_esfm", "false"},
    {"phase3.hca_bias_path", "false"},
    {"phase3.seed", "1009"},

    {"baseline.gain_exponent", "1.3"},

    {"eval.pristine_images", "200"},
};

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  size_t e = s.find_last_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& e : kSchema) values_[e.key] = e.default_value;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": bad section");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (section.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": key outside any [section]");
    cfg.set(section + "." + key, value);
  }
  return cfg;
}

void RunConfig::set(const std::string& dotted_key, const std::string& value) {
  auto it = values_.find(dotted_key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + dotted_key);
  it->second = value;
}

const std::string& RunConfig::get(const std::string& dotted_key) const {
  auto it = values_.find(dotted_key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + dotted_key);
  return it->second;
}

int64_t RunConfig::get_int(const std::string& key) const {
  try {
    return std::stoll(get(key));
  } catch (const std::logic_error&) {
    throw ConfigError("config key " + key + " is not an integer: " + get(key));
  }
}

double RunConfig::get_double(const std::string& key) const {
  try {
    return std::stod(get(key));
  } catch (const std::logic_error&) {
    throw ConfigError("config key " + key + " is not a number: " + get(key));
  }
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key " + key + " is not a boolean: " + v);
}

uint64_t RunConfig::get_u64(const std::string& key) const {
  try {
    return std::stoull(get(key));
  } catch (const std::logic_error&) {
    throw ConfigError("config key " + key + " is not an unsigned integer: " + get(key));
  }
}

std::string RunConfig::canonical_text() const {
  std::string cur_section;
  std::ostringstream os;
  for (const auto& [k, v] : values_) {  // std::map keeps keys sorted
    const size_t dot = k.find('.');
    const std::string section = k.substr(0, dot);
    if (section != cur_section) {
      if (!cur_section.empty()) os << "\n";
      os << "[" << section << "]\n";
      cur_section = section;
    }
    os << k.substr(dot + 1) << " = " << v << "\n";
  }
  return os.str();
}

uint64_t RunConfig::digest() const {
  const std::string text = canonical_text();
  return fnv1a64(text.data(), text.size());
}

uint64_t fnv1a64(const void* data, size_t size) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  uint64_t h = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace hdrvq
