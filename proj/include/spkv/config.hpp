// spkv/config.hpp

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

// Pipeline configuration, read from an INI file:
//
//   schema_version = 1
//   source = synthetic          ; or audio
//   work_dir = work
//   seed = 1
//   [ubm]  components, iterations
//   [tv]   rank, iterations
//   [system.NAME]  features, posteriors, shifting, rank, noise
//   [fusion.NAME]  members = a, b, c
//
// Relative paths are resolved against the directory of the config file.
// Unknown sections and keys are rejected.

#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "spkv/common.hpp"
#include "spkv/frontend.hpp"
#include "spkv/gmm.hpp"
#include "spkv/ivector.hpp"
#include "spkv/synthkit.hpp"

namespace spkv {

inline constexpr int kConfigSchemaVersion = 1;

struct SystemConfig {
  std::string name;
  FeatureKind features = FeatureKind::kMfcc;
  std::string posteriors = "ubm";  // ubm | twofeats | external
  std::string shifting = "none";   // idvc | mean | none
  int eigenvoice_rank = 0;         // 0 keeps every dimension
  double noise = 0.0;              // synthetic source only
};

struct FusionConfig {
  std::string name;
  std::vector<std::string> members;
};

struct SyntheticConfig {
  int dim = 10;
  double between = 3.0;        // B_true(i) = between * decay^i
  double between_decay = 1.0;
  double within = 1.0;         // W_true = within * I
  int train_speakers = 300;
  int train_sessions = 8;
  std::vector<std::string> train_partitions{"sub1", "sub2", "sub3", "sub4"};
  double train_shift = 0.0;
  int eval_speakers = 60;
  int enroll_sessions = 3;
  int test_sessions = 2;
  std::vector<std::string> eval_partitions{"eval_a", "eval_b"};
  double test_shift = 0.0;     // norm of the offset added to test and dev vectors
  int dev_vectors = 200;
};

struct DataConfig {
  std::string train, enroll, enroll_map, test, dev, trials;
  std::string posterior_dir;  // external posteriors, <utt>.ivmx (voiced frames x C)
};

struct PipelineConfig {
  int schema_version = kConfigSchemaVersion;
  std::string source = "synthetic";  // synthetic | audio
  std::string work_dir = "work";
  std::uint64_t seed = 0;
  int workers = 1;

  FrontendConfig frontend;
  VadConfig vad;
  double posterior_prune = 1e-8;
  GmmTrainConfig ubm;
  TvConfig tv;
  int plda_iterations = 10;
  double ridge = 1e-6;
  bool idvc_center = true;
  int idvc_max_rank = 0;
  bool idvc_include_dev = true;
  bool shift_enroll = false;
  SyntheticConfig synthetic;
  DataConfig data;
  std::vector<SystemConfig> systems;
  std::vector<FusionConfig> fusions;
  std::string primary;  // report returned by run_pipeline; default: last fusion or only system

  const SystemConfig& system(const std::string& name) const {
    for (const auto& s : systems)
      if (s.name == name) return s;
    throw UsageError("unknown system '" + name + "'");
  }
};

namespace config_detail {

using boost::property_tree::ptree;

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

class Section {
 public:
  Section(const ptree& tree, std::string name) : tree_(tree), name_(std::move(name)) {}

  template <typename T>
  void get(const std::string& key, T* out) {
    known_.insert(key);
    auto child = tree_.get_child_optional(ptree::path_type(key, '\0'));
    if (!child) return;
    const std::string raw = child->data();
    if constexpr (std::is_same_v<T, std::string>) {
      *out = raw;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (raw == "true" || raw == "1" || raw == "yes") *out = true;
      else if (raw == "false" || raw == "0" || raw == "no") *out = false;
      else fail(key, raw);
    } else {
      std::istringstream is(raw);
      T v{};
      if (!(is >> v) || !(is >> std::ws).eof()) fail(key, raw);
      *out = v;
    }
  }

  void get_list(const std::string& key, std::vector<std::string>* out) {
    std::string raw;
    bool present = tree_.get_child_optional(ptree::path_type(key, '\0')).has_value();
    get(key, &raw);
    if (present) *out = split_list(raw);
  }

  void get_path(const std::string& key, const std::filesystem::path& base, std::string* out) {
    get(key, out);
    if (!out->empty() && std::filesystem::path(*out).is_relative()) *out = (base / *out).string();
  }

  // Rejects keys that were never asked for.
  void finish() const {
    for (const auto& [k, v] : tree_)
      if (!known_.count(k))
        throw UsageError("config: unknown key '" + k + "' in " +
                         (name_.empty() ? std::string("top level") : "section [" + name_ + "]"));
  }

 private:
  [[noreturn]] void fail(const std::string& key, const std::string& raw) const {
    throw UsageError("config: bad value '" + raw + "' for " + (name_.empty() ? "" : name_ + ".") + key);
  }

  const ptree& tree_;
  std::string name_;
  std::set<std::string> known_;
};

}  // namespace config_detail

inline void validate_config(const PipelineConfig& c) {
  if (c.schema_version != kConfigSchemaVersion)
    throw UsageError(detail::concat("config: schema_version ", c.schema_version,
                                    " is not supported (expected ", kConfigSchemaVersion, ")"));
  if (c.source != "synthetic" && c.source != "audio")
    throw UsageError("config: source must be 'synthetic' or 'audio'");
  if (c.workers < 1) throw UsageError("config: workers must be >= 1");
  if (c.systems.empty()) throw UsageError("config: no [system.*] sections");
  std::set<std::string> names;
  for (const auto& s : c.systems) {
    if (!names.insert(s.name).second) throw UsageError("config: duplicate system '" + s.name + "'");
    if (s.posteriors != "ubm" && s.posteriors != "twofeats" && s.posteriors != "external")
      throw UsageError("config: system " + s.name + ": posteriors must be ubm, twofeats or external");
    if (s.shifting != "idvc" && s.shifting != "mean" && s.shifting != "none")
      throw UsageError("config: system " + s.name + ": shifting must be idvc, mean or none");
    if (s.eigenvoice_rank < 0) throw UsageError("config: system " + s.name + ": negative rank");
    if (s.noise < 0.0) throw UsageError("config: system " + s.name + ": negative noise");
    if (s.shifting == "mean" && c.source == "audio" && c.data.dev.empty())
      throw UsageError("config: system " + s.name + ": mean shifting needs data.dev");
    if (s.posteriors == "external" && c.source == "audio" && c.data.posterior_dir.empty())
      throw UsageError("config: system " + s.name + ": external posteriors need data.posterior_dir");
  }
  for (const auto& f : c.fusions) {
    if (!names.insert(f.name).second) throw UsageError("config: name '" + f.name + "' used twice");
    if (f.members.empty()) throw UsageError("config: fusion " + f.name + " has no members");
    for (const auto& m : f.members) c.system(m);
  }
  if (!c.primary.empty() && !names.count(c.primary))
    throw UsageError("config: primary '" + c.primary + "' is not a system or fusion");
  if (c.source == "audio") {
    for (const auto* p : {&c.data.train, &c.data.enroll, &c.data.enroll_map, &c.data.test, &c.data.trials})
      if (p->empty()) throw UsageError("config: audio source needs data.train/enroll/enroll_map/test/trials");
  } else {
    const auto& s = c.synthetic;
    if (s.dim < 1 || s.train_speakers < 2 || s.train_sessions < 1 || s.eval_speakers < 1 ||
        s.enroll_sessions < 1 || s.test_sessions < 1 || s.dev_vectors < 0)
      throw UsageError("config: synthetic counts out of range");
    if (s.between < 0 || s.within <= 0 || s.between_decay <= 0)
      throw UsageError("config: synthetic variances out of range");
  }
  if (c.ubm.components < 1 || c.ubm.iterations < 0) throw UsageError("config: bad [ubm] settings");
  if (c.tv.rank < 1 || c.tv.iterations < 0) throw UsageError("config: bad [tv] settings");
  if (c.plda_iterations < 0) throw UsageError("config: bad [plda] iterations");
}

/// Parses INI text. base_dir anchors relative paths.
inline PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  using config_detail::ptree;
  using config_detail::Section;
  ptree tree;
  try {
    std::istringstream in(text);
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw UsageError(std::string("config: ") + e.what());
  }

  PipelineConfig c;
  ptree top;
  std::map<std::string, const ptree*> sections;
  for (const auto& [k, v] : tree) {
    if (v.empty()) top.push_back({k, v});
    else sections[k] = &v;
  }
  Section t(top, "");
  t.get("schema_version", &c.schema_version);
  t.get("source", &c.source);
  t.get_path("work_dir", base_dir, &c.work_dir);
  t.get("seed", &c.seed);
  t.get("workers", &c.workers);
  t.get("primary", &c.primary);
  t.finish();
  if (std::filesystem::path(c.work_dir).is_relative()) c.work_dir = (base_dir / c.work_dir).string();

  static const ptree kEmpty;
  auto section = [&](const std::string& name) -> const ptree& {
    auto it = sections.find(name);
    return it == sections.end() ? kEmpty : *it->second;
  };
  std::set<std::string> handled;
  auto use = [&](const std::string& name) {
    handled.insert(name);
    return Section(section(name), name);
  };

  {
    auto s = use("frontend");
    s.get("cmn_window", &c.frontend.cmn_window_s);
    s.get("vad_offset", &c.vad.offset_scale);
    s.get("vad_window", &c.vad.window);
    s.get("num_ceps", &c.frontend.num_ceps);
    s.get("num_mel_bins", &c.frontend.num_mel_bins);
    s.get("lpc_order", &c.frontend.lpc_order);
    s.finish();
  }
  {
    auto s = use("ubm");
    s.get("components", &c.ubm.components);
    s.get("iterations", &c.ubm.iterations);
    s.get("diagonal", &c.ubm.diagonal);
    s.get("floor_factor", &c.ubm.floor_factor);
    s.get("posterior_prune", &c.posterior_prune);
    s.finish();
  }
  {
    auto s = use("tv");
    s.get("rank", &c.tv.rank);
    s.get("iterations", &c.tv.iterations);
    s.get("diagonal", &c.tv.diagonal);
    s.finish();
  }
  {
    auto s = use("plda");
    s.get("iterations", &c.plda_iterations);
    s.get("ridge", &c.ridge);
    s.finish();
  }
  {
    auto s = use("idvc");
    s.get("center", &c.idvc_center);
    s.get("max_rank", &c.idvc_max_rank);
    s.get("include_dev", &c.idvc_include_dev);
    s.finish();
  }
  {
    auto s = use("mean_shift");
    s.get("shift_enroll", &c.shift_enroll);
    s.finish();
  }
  {
    auto s = use("synthetic");
    auto& y = c.synthetic;
    s.get("dim", &y.dim);
    s.get("between", &y.between);
    s.get("between_decay", &y.between_decay);
    s.get("within", &y.within);
    s.get("train_speakers", &y.train_speakers);
    s.get("train_sessions", &y.train_sessions);
    s.get_list("train_partitions", &y.train_partitions);
    s.get("train_shift", &y.train_shift);
    s.get("eval_speakers", &y.eval_speakers);
    s.get("enroll_sessions", &y.enroll_sessions);
    s.get("test_sessions", &y.test_sessions);
    s.get_list("eval_partitions", &y.eval_partitions);
    s.get("test_shift", &y.test_shift);
    s.get("dev_vectors", &y.dev_vectors);
    s.finish();
  }
  {
    auto s = use("data");
    auto& d = c.data;
    s.get_path("train", base_dir, &d.train);
    s.get_path("enroll", base_dir, &d.enroll);
    s.get_path("enroll_map", base_dir, &d.enroll_map);
    s.get_path("test", base_dir, &d.test);
    s.get_path("dev", base_dir, &d.dev);
    s.get_path("trials", base_dir, &d.trials);
    s.get_path("posterior_dir", base_dir, &d.posterior_dir);
    s.finish();
  }
  for (const auto& [name, sub] : sections) {
    if (name.rfind("system.", 0) == 0) {
      handled.insert(name);
      SystemConfig sys;
      sys.name = name.substr(7);
      Section s(*sub, name);
      std::string kind = to_string(sys.features);
      s.get("features", &kind);
      try {
        sys.features = feature_kind_from_string(kind);
      } catch (const Error&) {
        throw UsageError("config: " + name + ".features must be mfcc or plp");
      }
      s.get("posteriors", &sys.posteriors);
      s.get("shifting", &sys.shifting);
      s.get("rank", &sys.eigenvoice_rank);
      s.get("noise", &sys.noise);
      s.finish();
      c.systems.push_back(std::move(sys));
    } else if (name.rfind("fusion.", 0) == 0) {
      handled.insert(name);
      FusionConfig f;
      f.name = name.substr(7);
      Section s(*sub, name);
      s.get_list("members", &f.members);
      s.finish();
      c.fusions.push_back(std::move(f));
    }
  }
  for (const auto& [name, sub] : sections)
    if (!handled.count(name)) throw UsageError("config: unknown section [" + name + "]");
  validate_config(c);
  return c;
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const auto base = std::filesystem::absolute(path).parent_path();
  return parse_config(ss.str(), base);
}

inline SreSpec to_sre_spec(const SyntheticConfig& s, std::uint64_t seed) {
  SreSpec spec;
  spec.seed = seed;
  spec.b_true.resize(s.dim);
  for (int i = 0; i < s.dim; ++i) spec.b_true(i) = s.between * std::pow(s.between_decay, i);
  spec.w_true = Vector::Constant(s.dim, s.within);
  spec.train_speakers = s.train_speakers;
  spec.train_sessions = s.train_sessions;
  spec.train_partitions = s.train_partitions;
  spec.train_shift_scale = s.train_shift;
  spec.eval_speakers = s.eval_speakers;
  spec.enroll_sessions = s.enroll_sessions;
  spec.test_sessions = s.test_sessions;
  spec.eval_partitions = s.eval_partitions;
  spec.dev_vectors = s.dev_vectors;
  if (s.test_shift > 0.0) {
    Rng rng(derive_seed(seed, "test-shift"));
    Vector dir = random_normal(s.dim, 1, rng);
    spec.test_shift = s.test_shift * dir / dir.norm();
  }
  return spec;
}

}  // namespace spkv
