// spkv/manifest.hpp

// Copyright 2026 The spkv Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Stage manifests (input/output hashes, parameters, seed) and per-item
// timing logs. Manifests carry no timestamps so reruns are byte-identical;
// wall time and memory go to the separate timing log.

#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "json.hpp"
#include "spkv/common.hpp"
#include "spkv/io.hpp"

namespace spkv {

inline std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw DataError("sha256 failed");
  static const char* kHex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 15]);
  }
  return out;
}

inline std::string sha256_file(const std::string& path) { return sha256_hex(read_file(path)); }

class Manifest {
 public:
  /// Paths under base are recorded relative to it.
  Manifest(std::filesystem::path base, std::string stage, std::uint64_t seed)
      : base_(std::move(base)), stage_(std::move(stage)), seed_(seed) {}

  void input(const std::string& path) { inputs_[key(path)] = sha256_file(path); }
  void output(const std::string& path) { outputs_[key(path)] = sha256_file(path); }
  template <typename T>
  void param(const std::string& name, const T& value) {
    params_[name] = value;
  }

  std::string dump() const {
    nlohmann::ordered_json j;
    j["stage"] = stage_;
    j["seed"] = seed_;
    j["params"] = params_;
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    return j.dump(2) + "\n";
  }

  void write(const std::string& path) const { atomic_write(path, dump()); }

 private:
  std::string key(const std::string& path) const {
    const auto rel = std::filesystem::path(path).lexically_normal().lexically_relative(base_);
    if (rel.empty() || *rel.begin() == "..") return path;
    return rel.string();
  }

  std::filesystem::path base_;
  std::string stage_;
  std::uint64_t seed_;
  nlohmann::json params_ = nlohmann::json::object();
  std::map<std::string, std::string> inputs_, outputs_;
};

/// Resident set size of this process in kB, 0 when /proc is unavailable.
inline long current_rss_kb() {
  std::ifstream in("/proc/self/status");
  std::string line;
  while (std::getline(in, line))
    if (line.rfind("VmRSS:", 0) == 0) return std::strtol(line.c_str() + 6, nullptr, 10);
  return 0;
}

/// Tab-separated log of item, wall seconds and RSS after the item.
class TimingLog {
 public:
  void record(const std::string& item, double seconds) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "\t%.6f\t%ld\n", seconds, current_rss_kb());
    std::lock_guard<std::mutex> lock(mu_);
    rows_[item] = item + buf;
  }

  template <typename Fn>
  auto time(const std::string& item, Fn&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      record(item, seconds_since(t0));
    } else {
      auto r = fn();
      record(item, seconds_since(t0));
      return r;
    }
  }

  void write(const std::string& path) const {
    std::string s = "item\tseconds\trss_kb\n";
    for (const auto& [k, v] : rows_) s += v;
    atomic_write(path, s);
  }

 private:
  static double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  std::mutex mu_;
  std::map<std::string, std::string> rows_;
};

}  // namespace spkv
