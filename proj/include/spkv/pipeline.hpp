// spkv/pipeline.hpp

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

// Config-driven pipeline. Stages run in a fixed order:
//
//   features -> vad -> stats -> ivector -> lw -> shift -> plda -> postnorm
//            -> score -> fuse -> evaluate
//
// Work directory layout:
//   features/<kind>/<set>/<utt>.ivmx    vad/<set>/<utt>.ivmx (1 x T, 0/1)
//   chains/<feat>-<post>/{ubm*.ivgm, stats/<set>/<utt>.ivst, tv.ivtv, ivectors/<set>.ivmx}
//   corpus/{<set>.ivmx, trials.tsv, enroll_map.tsv}          (synthetic source)
//   systems/<name>/{lw.ivlw, lw/, shift.*, shift/, plda.ivpr, postnorm.ivpl, postnorm/, scores.tsv}
//   fusion/<name>.tsv    reports/<name>.txt    reports/summary.tsv
//   manifests/<stage>.<target>.json    logs/<stage>.<target>.tsv
//
// Sub-systems with the same feature kind and posterior source share one
// chain (UBM, statistics, TV model, raw i-vectors). With the synthetic
// source the front-end stages record a skip and the ivector stage writes
// the generated corpus, one chain per sub-system so that sub-system noise
// stays independent.
//
// Everything except logs/ is byte-identical across reruns and worker counts.

#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "spkv/common.hpp"
#include "spkv/config.hpp"
#include "spkv/embedspace.hpp"
#include "spkv/eval.hpp"
#include "spkv/frontend.hpp"
#include "spkv/gmm.hpp"
#include "spkv/io.hpp"
#include "spkv/ivector.hpp"
#include "spkv/manifest.hpp"
#include "spkv/plda.hpp"
#include "spkv/synthkit.hpp"

namespace spkv {

inline constexpr std::array<std::string_view, 11> kStages = {
    "features", "vad", "stats", "ivector", "lw", "shift", "plda", "postnorm", "score", "fuse", "evaluate"};

inline int stage_index(std::string_view name) {
  for (std::size_t i = 0; i < kStages.size(); ++i)
    if (kStages[i] == name) return static_cast<int>(i);
  std::string all;
  for (auto s : kStages) all += (all.empty() ? "" : ", ") + std::string(s);
  throw UsageError("unknown stage '" + std::string(name) + "' (expected one of " + all + ")");
}

/// One line of an utterance list: utt <TAB> wav path [<TAB> speaker [<TAB> partition]].
struct UttEntry {
  std::string utt, path, speaker, partition;
};
using UttList = std::vector<UttEntry>;

inline UttList read_utt_list(const std::string& path) {
  const auto base = std::filesystem::absolute(path).parent_path();
  UttList out;
  std::set<std::string> seen;
  for (auto& f : read_tsv(path, 2)) {
    UttEntry e;
    e.utt = f[0];
    if (e.utt.find('/') != std::string::npos || e.utt == "." || e.utt == "..")
      throw DataError(path + ": bad utterance id '" + e.utt + "'");
    if (!seen.insert(e.utt).second) throw DataError(path + ": duplicate utterance '" + e.utt + "'");
    e.path = std::filesystem::path(f[1]).is_relative() ? (base / f[1]).string() : f[1];
    if (f.size() > 2) e.speaker = f[2];
    if (f.size() > 3) e.partition = f[3];
    out.push_back(std::move(e));
  }
  if (out.empty()) throw DataError(path + ": empty utterance list");
  return out;
}

inline Matrix vad_to_matrix(const VadMask& m) {
  Matrix out(1, static_cast<Eigen::Index>(m.size()));
  for (std::size_t i = 0; i < m.size(); ++i) out(0, static_cast<Eigen::Index>(i)) = m[i] ? 1.0 : 0.0;
  return out;
}

inline VadMask vad_from_matrix(const Matrix& m) {
  if (m.rows() != 1) throw DataError("VAD file must be a single row");
  VadMask out(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.cols(); ++i) out[static_cast<std::size_t>(i)] = m(0, i) > 0.5;
  return out;
}

/// Enrollment vectors of every model, looked up by utterance id.
inline std::map<std::string, std::vector<Vector>> gather_models(const EnrollMap& map, const IVectorSet& enroll) {
  std::map<std::string, const Vector*> by_utt;
  for (const auto& v : enroll) by_utt[v.utterance_id] = &v.w;
  std::map<std::string, std::vector<Vector>> out;
  for (const auto& [model, utts] : map) {
    auto& vs = out[model];
    for (const auto& u : utts) {
      auto it = by_utt.find(u);
      if (it == by_utt.end()) throw DataError("enroll map: model " + model + " uses unknown utterance " + u);
      vs.push_back(*it->second);
    }
  }
  return out;
}

/// Scores every trial of the key. Output order follows the key.
inline ScoreSet score_key(const std::vector<TrialKey>& key, const EnrollMap& map, const IVectorSet& enroll,
                          const IVectorSet& test, const PostNormTransform& t, int workers = 1,
                          TimingLog* timing = nullptr) {
  const auto models = gather_models(map, enroll);
  std::map<std::string, const Vector*> tests;
  for (const auto& v : test) tests[v.utterance_id] = &v.w;
  // Group trial indices by model so timing is reported per enrollment model.
  std::vector<std::string> model_order;
  std::map<std::string, std::vector<std::size_t>> by_model;
  for (std::size_t i = 0; i < key.size(); ++i) {
    if (!models.count(key[i].enroll_id))
      throw DataError("trial key: unknown enrollment model " + key[i].enroll_id);
    if (!tests.count(key[i].test_id)) throw DataError("trial key: unknown test segment " + key[i].test_id);
    auto [it, inserted] = by_model.try_emplace(key[i].enroll_id);
    if (inserted) model_order.push_back(key[i].enroll_id);
    it->second.push_back(i);
  }
  ScoreSet out(key.size());
  parallel_for(model_order.size(), workers, [&](std::size_t m) {
    const auto& id = model_order[m];
    auto work = [&] {
      const auto& ev = models.at(id);
      for (std::size_t i : by_model.at(id)) {
        out[i] = {key[i].enroll_id, key[i].test_id, score_llr(ev, *tests.at(key[i].test_id), t.psi),
                  key[i].label, key[i].partition};
      }
    };
    if (timing) timing->time(id, work);
    else work();
  });
  return out;
}

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg)
      : cfg_(std::move(cfg)), work_(std::filesystem::path(cfg_.work_dir).lexically_normal()) {
    validate_config(cfg_);
  }

  const PipelineConfig& config() const { return cfg_; }
  std::filesystem::path work_dir() const { return work_; }

  /// Runs one stage for every sub-system (or only `only`, when given).
  void run_stage(const std::string& stage, const std::string& only = "") {
    const int idx = stage_index(stage);
    if (!only.empty()) {
      bool found = false;
      for (const auto& s : cfg_.systems) found |= s.name == only;
      for (const auto& f : cfg_.fusions) found |= f.name == only;
      if (!found) throw UsageError("unknown system or fusion '" + only + "'");
    }
    only_ = only;
    try {
      switch (idx) {
        case 0: stage_features(); break;
        case 1: stage_vad(); break;
        case 2: stage_stats(); break;
        case 3: stage_ivector(); break;
        case 4: per_system([&](const SystemConfig& s) { stage_lw(s); }); break;
        case 5: per_system([&](const SystemConfig& s) { stage_shift(s); }); break;
        case 6: per_system([&](const SystemConfig& s) { stage_plda(s); }); break;
        case 7: per_system([&](const SystemConfig& s) { stage_postnorm(s); }); break;
        case 8: per_system([&](const SystemConfig& s) { stage_score(s); }); break;
        case 9: stage_fuse(); break;
        default: stage_evaluate(); break;
      }
    } catch (const Error& e) {
      rethrow_with_context(e, "stage '" + stage + "': ");
    } catch (const std::filesystem::filesystem_error& e) {
      throw DataError("stage '" + stage + "': " + e.what());
    }
  }

  /// Every stage in order; returns the primary report.
  MetricReport run_all() {
    for (auto s : kStages) {
      log_info("stage ", s);
      run_stage(std::string(s));
    }
    return read_primary_report();
  }

  std::string primary_name() const {
    if (!cfg_.primary.empty()) return cfg_.primary;
    if (!cfg_.fusions.empty()) return cfg_.fusions.back().name;
    return cfg_.systems.back().name;
  }

  MetricReport read_primary_report() const {
    const std::string name = primary_name();
    return report(read_scores(scores_path(name), &trial_key()));
  }

  // Paths.
  std::string manifest_path(const std::string& stage, const std::string& target) const {
    return (work_ / "manifests" / (stage + "." + target + ".json")).string();
  }
  std::string log_path(const std::string& stage, const std::string& target) const {
    return (work_ / "logs" / (stage + "." + target + ".tsv")).string();
  }
  std::string chain_of(const SystemConfig& s) const {
    if (cfg_.source == "synthetic") return "synth-" + s.name;
    return to_string(s.features) + "-" + s.posteriors;
  }
  std::filesystem::path chain_dir(const std::string& chain) const { return work_ / "chains" / chain; }
  std::filesystem::path system_dir(const std::string& name) const { return work_ / "systems" / name; }
  std::string scores_path(const std::string& name) const {
    for (const auto& f : cfg_.fusions)
      if (f.name == name) return (work_ / "fusion" / (name + ".tsv")).string();
    return (system_dir(name) / "scores.tsv").string();
  }
  std::string trials_path() const {
    return cfg_.source == "synthetic" ? (work_ / "corpus" / "trials.tsv").string() : cfg_.data.trials;
  }
  std::string enroll_map_path() const {
    return cfg_.source == "synthetic" ? (work_ / "corpus" / "enroll_map.tsv").string() : cfg_.data.enroll_map;
  }

  std::vector<std::string> sets() const {
    std::vector<std::string> s{"train", "enroll", "test"};
    if (cfg_.source == "synthetic" ? cfg_.synthetic.dev_vectors > 0 : !cfg_.data.dev.empty()) s.push_back("dev");
    return s;
  }

 private:
  // ---------------------------------------------------------------------
  // Helpers

  std::uint64_t seed_for(const std::string& tag) const { return derive_seed(cfg_.seed, tag); }

  bool selected(const std::string& name) const { return only_.empty() || only_ == name; }

  void require(const std::string& stage, const std::string& target) const {
    if (!std::filesystem::exists(manifest_path(stage, target)))
      throw DataError("upstream stage '" + stage + "' has not completed for '" + target + "' (missing " +
                      manifest_path(stage, target) + ")");
  }

  template <typename Fn>
  void per_system(Fn&& fn) {
    for (const auto& s : cfg_.systems)
      if (selected(s.name)) {
        try {
          fn(s);
        } catch (const Error& e) {
          rethrow_with_context(e, "system '" + s.name + "': ");
        }
      }
  }

  std::set<FeatureKind> feature_kinds() const {
    std::set<FeatureKind> k;
    for (const auto& s : cfg_.systems) {
      k.insert(s.features);
      if (s.posteriors == "twofeats") {
        k.insert(FeatureKind::kMfcc);
        k.insert(FeatureKind::kPlp);
      }
    }
    return k;
  }

  std::vector<std::string> chains() const {
    std::vector<std::string> out;
    for (const auto& s : cfg_.systems)
      if (selected(s.name) && std::find(out.begin(), out.end(), chain_of(s)) == out.end())
        out.push_back(chain_of(s));
    return out;
  }

  const SystemConfig& chain_system(const std::string& chain) const {
    for (const auto& s : cfg_.systems)
      if (chain_of(s) == chain) return s;
    throw UsageError("unknown chain " + chain);
  }

  const UttList& list(const std::string& set) const {
    auto it = lists_.find(set);
    if (it != lists_.end()) return it->second;
    const std::string& p = set == "train"    ? cfg_.data.train
                           : set == "enroll" ? cfg_.data.enroll
                           : set == "test"   ? cfg_.data.test
                                             : cfg_.data.dev;
    return lists_[set] = read_utt_list(p);
  }

  std::string feature_path(FeatureKind k, const std::string& set, const std::string& utt) const {
    return (work_ / "features" / to_string(k) / set / (utt + ".ivmx")).string();
  }
  std::string vad_path(const std::string& set, const std::string& utt) const {
    return (work_ / "vad" / set / (utt + ".ivmx")).string();
  }
  std::string stats_path(const std::string& chain, const std::string& set, const std::string& utt) const {
    return (chain_dir(chain) / "stats" / set / (utt + ".ivst")).string();
  }
  std::string ivectors_path(const std::string& chain, const std::string& set) const {
    return (chain_dir(chain) / "ivectors" / (set + ".ivmx")).string();
  }
  std::string sys_set_path(const SystemConfig& s, const std::string& step, const std::string& set) const {
    return (system_dir(s.name) / step / (set + ".ivmx")).string();
  }

  /// Voiced, normalized frames of every utterance of a set.
  std::vector<Matrix> voiced_frames(FeatureKind k, const std::string& set) const {
    const auto& l = list(set);
    std::vector<Matrix> out(l.size());
    parallel_for(l.size(), cfg_.workers, [&](std::size_t i) {
      FeatureMatrix f;
      f.data = read_ivmx(feature_path(k, set, l[i].utt));
      f.kind = k;
      const VadMask mask = vad_from_matrix(read_ivmx(vad_path(set, l[i].utt)));
      try {
        out[i] = select_voiced(f, mask).data;
      } catch (const DataError& e) {
        throw DataError("utterance " + l[i].utt + ": " + e.what());
      }
    });
    return out;
  }

  const std::vector<TrialKey>& trial_key() const {
    if (!key_) key_ = read_trial_key(trials_path());
    return *key_;
  }

  // ---------------------------------------------------------------------
  // Stages

  void skip(const std::string& stage, const std::string& target) {
    Manifest m(work_, stage, seed_for(stage));
    m.param("skipped", "synthetic source");
    m.write(manifest_path(stage, target));
  }

  void stage_features() {
    if (cfg_.source == "synthetic") return skip("features", "synthetic");
    for (FeatureKind k : feature_kinds()) {
      const std::string target = to_string(k);
      Manifest man(work_, "features", seed_for("features"));
      man.param("kind", target);
      man.param("num_ceps", cfg_.frontend.num_ceps);
      man.param("cmn_window_s", cfg_.frontend.cmn_window_s);
      man.param("deltas", 2);
      TimingLog timing;
      for (const auto& set : sets()) {
        const auto& l = list(set);
        parallel_for(l.size(), cfg_.workers, [&](std::size_t i) {
          timing.time(set + "/" + l[i].utt, [&] {
            const AudioSignal sig = read_wav(l[i].path);
            write_ivmx(feature_path(k, set, l[i].utt), extract_features(sig, k, cfg_.frontend).data);
          });
        });
        for (const auto& u : l) {
          man.input(u.path);
          man.output(feature_path(k, set, u.utt));
        }
      }
      man.write(manifest_path("features", target));
      timing.write(log_path("features", target));
    }
  }

  void stage_vad() {
    if (cfg_.source == "synthetic") {
      require("features", "synthetic");
      return skip("vad", "all");
    }
    const FeatureKind k = *feature_kinds().begin();
    require("features", to_string(k));
    Manifest man(work_, "vad", seed_for("vad"));
    man.param("energy_source", to_string(k));
    man.param("offset_scale", cfg_.vad.offset_scale);
    man.param("window", cfg_.vad.window);
    TimingLog timing;
    for (const auto& set : sets()) {
      const auto& l = list(set);
      parallel_for(l.size(), cfg_.workers, [&](std::size_t i) {
        timing.time(set + "/" + l[i].utt, [&] {
          FeatureMatrix f;
          f.data = read_ivmx(feature_path(k, set, l[i].utt));
          f.energy_index = 0;
          write_ivmx(vad_path(set, l[i].utt), vad_to_matrix(compute_vad(f, cfg_.vad)));
        });
      });
      for (const auto& u : l) {
        man.input(feature_path(k, set, u.utt));
        man.output(vad_path(set, u.utt));
      }
    }
    man.write(manifest_path("vad", "all"));
    timing.write(log_path("vad", "all"));
  }

  void stage_stats() {
    require("vad", "all");
    for (const auto& chain : chains()) {
      if (cfg_.source == "synthetic") {
        skip("stats", chain);
        continue;
      }
      const SystemConfig& sys = chain_system(chain);
      const FeatureKind k = sys.features;
      const auto dir = chain_dir(chain);
      Manifest man(work_, "stats", seed_for("ubm:" + to_string(k)));
      man.param("features", to_string(k));
      man.param("posteriors", sys.posteriors);
      man.param("components", cfg_.ubm.components);
      man.param("iterations", cfg_.ubm.iterations);
      man.param("diagonal", cfg_.ubm.diagonal);
      man.param("posterior_prune", cfg_.posterior_prune);
      TimingLog timing;

      // Posterior source for every set of this chain.
      std::function<Matrix(const std::string&, std::size_t, const Matrix&)> posteriors;
      GmmModel ubm;
      std::map<std::string, std::vector<Matrix>> other_cache;
      std::map<std::string, std::vector<Matrix>> ext_cache;
      const auto train = voiced_frames(k, "train");

      if (sys.posteriors == "ubm") {
        GmmTrainConfig gc = cfg_.ubm;
        gc.seed = seed_for("ubm:" + to_string(k));
        ubm = timing.time("train/ubm", [&] { return train_gmm_em(train, gc); });
        atomic_write((dir / "ubm.ivgm").string(), encode_gmm(ubm));
        posteriors = [&](const std::string&, std::size_t, const Matrix& x) {
          return gmm_posteriors(ubm, x, cfg_.posterior_prune);
        };
      } else if (sys.posteriors == "twofeats") {
        GmmTrainConfig gc = cfg_.ubm;
        gc.seed = seed_for("ubm:plp");
        const auto plp_train = voiced_frames(FeatureKind::kPlp, "train");
        const auto mfcc_train =
            k == FeatureKind::kMfcc ? train : voiced_frames(FeatureKind::kMfcc, "train");
        const GmmModel plp_ubm = timing.time("train/ubm", [&] { return train_gmm_em(plp_train, gc); });
        auto coupled = std::make_shared<CoupledUbm>(timing.time(
            "train/couple", [&] { return couple_ubm(plp_ubm, mfcc_train, plp_train, cfg_.ubm.floor_factor); }));
        atomic_write((dir / "ubm_plp.ivgm").string(), encode_gmm(coupled->plp_ubm));
        atomic_write((dir / "ubm_mfcc.ivgm").string(), encode_gmm(coupled->mfcc_ubm));
        ubm = k == FeatureKind::kMfcc ? coupled->mfcc_ubm : coupled->plp_ubm;
        atomic_write((dir / "ubm.ivgm").string(), encode_gmm(ubm));
        const FeatureKind other = k == FeatureKind::kMfcc ? FeatureKind::kPlp : FeatureKind::kMfcc;
        for (const auto& set : sets()) other_cache[set] = voiced_frames(other, set);
        posteriors = [&, coupled, k](const std::string& set, std::size_t i, const Matrix& x) {
          const Matrix& y = other_cache.at(set)[i];
          return k == FeatureKind::kMfcc ? two_feats_posteriors(*coupled, y, x, cfg_.posterior_prune)
                                         : two_feats_posteriors(*coupled, x, y, cfg_.posterior_prune);
        };
      } else {  // external
        auto load = [&](const std::string& set) {
          const auto& l = list(set);
          std::vector<Matrix> p(l.size());
          for (std::size_t i = 0; i < l.size(); ++i) {
            const std::string path =
                (std::filesystem::path(cfg_.data.posterior_dir) / (l[i].utt + ".ivmx")).string();
            p[i] = read_ivmx(path);
            man.input(path);
          }
          return p;
        };
        for (const auto& set : sets()) ext_cache[set] = load(set);
        ubm = timing.time("train/ubm", [&] {
          return gmm_from_posteriors(ext_cache.at("train"), train, cfg_.ubm.floor_factor, cfg_.ubm.diagonal);
        });
        atomic_write((dir / "ubm.ivgm").string(), encode_gmm(ubm));
        posteriors = [&](const std::string& set, std::size_t i, const Matrix& x) {
          const Matrix& p = ext_cache.at(set)[i];
          if (p.rows() != x.rows() || p.cols() != ubm.num_components())
            throw DataError(detail::concat("external posteriors for ", list(set)[i].utt, " are ", p.rows(), "x",
                                           p.cols(), ", expected ", x.rows(), "x", ubm.num_components()));
          return Matrix(p);
        };
      }
      man.output((dir / "ubm.ivgm").string());

      for (const auto& set : sets()) {
        const auto& l = list(set);
        const auto frames = set == "train" ? train : voiced_frames(k, set);
        parallel_for(l.size(), cfg_.workers, [&](std::size_t i) {
          timing.time(set + "/" + l[i].utt, [&] {
            const Matrix post = posteriors(set, i, frames[i]);
            atomic_write(stats_path(chain, set, l[i].utt),
                         encode_stats(accumulate_stats(post, frames[i], l[i].utt)));
          });
        });
        for (const auto& u : l) {
          man.input(feature_path(k, set, u.utt));
          man.input(vad_path(set, u.utt));
          man.output(stats_path(chain, set, u.utt));
        }
      }
      man.write(manifest_path("stats", chain));
      timing.write(log_path("stats", chain));
    }
  }

  void write_corpus() {
    const SreCorpus corpus = gen_sre_corpus(to_sre_spec(cfg_.synthetic, seed_for("corpus")));
    const auto dir = work_ / "corpus";
    write_ivectors((dir / "train.ivmx").string(), corpus.train);
    write_ivectors((dir / "enroll.ivmx").string(), corpus.enroll);
    write_ivectors((dir / "test.ivmx").string(), corpus.test);
    if (cfg_.synthetic.dev_vectors > 0) write_ivectors((dir / "dev.ivmx").string(), corpus.dev);
    write_trial_key((dir / "trials.tsv").string(), corpus.trials);
    write_enroll_map((dir / "enroll_map.tsv").string(), corpus.models);
  }

  void stage_ivector() {
    if (cfg_.source == "synthetic") {
      write_corpus();
      const auto& y = cfg_.synthetic;
      Manifest cm(work_, "ivector", seed_for("corpus"));
      cm.param("dim", y.dim);
      cm.param("between", y.between);
      cm.param("between_decay", y.between_decay);
      cm.param("within", y.within);
      cm.param("train_speakers", y.train_speakers);
      cm.param("train_sessions", y.train_sessions);
      cm.param("train_partitions", y.train_partitions);
      cm.param("train_shift", y.train_shift);
      cm.param("eval_speakers", y.eval_speakers);
      cm.param("enroll_sessions", y.enroll_sessions);
      cm.param("test_sessions", y.test_sessions);
      cm.param("eval_partitions", y.eval_partitions);
      cm.param("test_shift", y.test_shift);
      cm.param("dev_vectors", y.dev_vectors);
      for (const auto& set : sets()) cm.output((work_ / "corpus" / (set + ".ivmx")).string());
      cm.output(trials_path());
      cm.output(enroll_map_path());
      cm.write(manifest_path("ivector", "corpus"));
      for (const auto& chain : chains()) {
        require("stats", chain);
        const SystemConfig& sys = chain_system(chain);
        Manifest man(work_, "ivector", seed_for("noise:" + sys.name));
        man.param("noise", sys.noise);
        TimingLog timing;
        for (const auto& set : sets()) {
          const std::string in = (work_ / "corpus" / (set + ".ivmx")).string();
          timing.time(set, [&] {
            IVectorSet vs = read_ivectors(in);
            if (sys.noise > 0.0) vs = add_noise(std::move(vs), sys.noise, seed_for("noise:" + sys.name + ":" + set));
            write_ivectors(ivectors_path(chain, set), vs);
          });
          man.input(in);
          man.output(ivectors_path(chain, set));
        }
        man.write(manifest_path("ivector", chain));
        timing.write(log_path("ivector", chain));
      }
      return;
    }
    for (const auto& chain : chains()) {
      require("stats", chain);
      const auto dir = chain_dir(chain);
      Manifest man(work_, "ivector", seed_for("tv:" + chain));
      man.param("rank", cfg_.tv.rank);
      man.param("iterations", cfg_.tv.iterations);
      man.param("diagonal", cfg_.tv.diagonal);
      TimingLog timing;
      const GmmModel ubm = decode_gmm(read_file((dir / "ubm.ivgm").string()), (dir / "ubm.ivgm").string());
      man.input((dir / "ubm.ivgm").string());
      auto load = [&](const std::string& set) {
        const auto& l = list(set);
        std::vector<SufficientStats> st(l.size());
        for (std::size_t i = 0; i < l.size(); ++i) {
          const std::string p = stats_path(chain, set, l[i].utt);
          st[i] = decode_stats(read_file(p), p);
          st[i].utterance_id = l[i].utt;
          man.input(p);
        }
        return st;
      };
      const auto train = load("train");
      TvConfig tc = cfg_.tv;
      tc.seed = seed_for("tv:" + chain);
      const auto tv = timing.time("train/tv", [&] { return train_tv_em(train, ubm, tc); });
      atomic_write((dir / "tv.ivtv").string(), encode_tv(tv));
      man.output((dir / "tv.ivtv").string());
      for (const auto& set : sets()) {
        const auto st = set == "train" ? train : load(set);
        const auto& l = list(set);
        IVectorSet vs(l.size());
        parallel_for(l.size(), cfg_.workers, [&](std::size_t i) {
          timing.time(set + "/" + l[i].utt, [&] {
            vs[i] = extract_ivector(st[i], tv);
            vs[i].utterance_id = l[i].utt;
            vs[i].speaker = l[i].speaker;
            vs[i].partition = l[i].partition;
          });
        });
        write_ivectors(ivectors_path(chain, set), vs);
        man.output(ivectors_path(chain, set));
      }
      man.write(manifest_path("ivector", chain));
      timing.write(log_path("ivector", chain));
    }
  }

  /// Reads one vector set per configured set name, recording inputs.
  std::map<std::string, IVectorSet> read_sets(const std::function<std::string(const std::string&)>& path,
                                              Manifest& man, const std::vector<std::string>& names) const {
    std::map<std::string, IVectorSet> out;
    for (const auto& set : names) {
      out[set] = read_ivectors(path(set));
      man.input(path(set));
      man.input(path(set) + ".tsv");
    }
    return out;
  }

  void write_sets(const SystemConfig& s, const std::string& step, const std::map<std::string, IVectorSet>& vs,
                  Manifest& man) const {
    for (const auto& [set, v] : vs) {
      write_ivectors(sys_set_path(s, step, set), v);
      man.output(sys_set_path(s, step, set));
    }
  }

  template <typename Fn>
  IVectorSet map_set(const IVectorSet& in, Fn&& fn, TimingLog* timing, const std::string& set) const {
    IVectorSet out(in.size());
    parallel_for(in.size(), cfg_.workers, [&](std::size_t i) {
      if (timing) timing->time(set + "/" + in[i].utterance_id, [&] { out[i] = fn(in[i]); });
      else out[i] = fn(in[i]);
    });
    return out;
  }

  void stage_lw(const SystemConfig& s) {
    const std::string chain = chain_of(s);
    require("ivector", chain);
    Manifest man(work_, "lw", seed_for("lw:" + s.name));
    man.param("ridge", cfg_.ridge);
    auto in = read_sets([&](const std::string& set) { return ivectors_path(chain, set); }, man, sets());
    const LwTransform t = fit_lw(in.at("train"), cfg_.ridge);
    const std::string model = (system_dir(s.name) / "lw.ivlw").string();
    atomic_write(model, encode_lw(t));
    man.output(model);
    std::map<std::string, IVectorSet> out;
    for (const auto& [set, vs] : in)
      out[set] = map_set(vs, [&](const IVector& v) { return apply_lw(v, t); }, nullptr, set);
    write_sets(s, "lw", out, man);
    man.write(manifest_path("lw", s.name));
  }

  void stage_shift(const SystemConfig& s) {
    require("lw", s.name);
    Manifest man(work_, "shift", seed_for("shift:" + s.name));
    man.param("method", s.shifting);
    auto in = read_sets([&](const std::string& set) { return sys_set_path(s, "lw", set); }, man, sets());
    std::map<std::string, IVectorSet> out;
    if (s.shifting == "idvc") {
      std::map<std::string, IVectorSet> subsets;
      for (const auto& v : in.at("train")) subsets[v.partition.empty() ? "train" : v.partition].push_back(v);
      if (cfg_.idvc_include_dev && in.count("dev")) subsets["dev"] = in.at("dev");
      IdvcConfig ic;
      ic.center = cfg_.idvc_center;
      ic.max_rank = cfg_.idvc_max_rank;
      man.param("center", ic.center);
      man.param("max_rank", ic.max_rank);
      man.param("include_dev", cfg_.idvc_include_dev);
      std::vector<std::string> names;
      for (const auto& [k, v] : subsets) names.push_back(k);
      man.param("subsets", names);
      const IdvcModel m = fit_idvc(subsets, ic);
      log_info("system ", s.name, ": IDVC removes ", m.rank(), " direction(s) from ", subsets.size(), " subsets");
      const std::string model = (system_dir(s.name) / "shift.ivid").string();
      atomic_write(model, encode_idvc(m));
      man.output(model);
      const Matrix q = idvc_complement(m);
      for (const auto& [set, vs] : in)
        out[set] = map_set(
            vs, [&](const IVector& v) { return length_normalize(apply_idvc_reduced(v, m, q)); }, nullptr, set);
    } else if (s.shifting == "mean") {
      if (!in.count("dev")) throw DataError("mean shifting needs development vectors");
      const MeanShift m = fit_mean_shift(in.at("dev"));
      man.param("shift_enroll", cfg_.shift_enroll);
      const std::string model = (system_dir(s.name) / "shift.ivms").string();
      atomic_write(model, encode_mean_shift(m));
      man.output(model);
      for (const auto& [set, vs] : in) {
        out[set] = map_set(
            vs,
            [&](const IVector& v) {
              if (set == "test") return length_normalize(apply_mean_shift(v, m, Side::kTest));
              if (set == "enroll") return length_normalize(apply_mean_shift(v, m, Side::kEnroll, cfg_.shift_enroll));
              return v;
            },
            nullptr, set);
      }
    } else {
      out = in;
    }
    write_sets(s, "shift", out, man);
    man.write(manifest_path("shift", s.name));
  }

  void stage_plda(const SystemConfig& s) {
    require("shift", s.name);
    Manifest man(work_, "plda", seed_for("plda:" + s.name));
    man.param("iterations", cfg_.plda_iterations);
    man.param("ridge", cfg_.ridge);
    auto in = read_sets([&](const std::string& set) { return sys_set_path(s, "shift", set); }, man, {"train"});
    TimingLog timing;
    const PldaModel m = timing.time("train/plda", [&] { return train_plda(in.at("train"), cfg_.plda_iterations, cfg_.ridge); });
    const std::string model = (system_dir(s.name) / "plda.ivpr").string();
    atomic_write(model, encode_plda(m));
    man.output(model);
    man.write(manifest_path("plda", s.name));
    timing.write(log_path("plda", s.name));
  }

  void stage_postnorm(const SystemConfig& s) {
    require("plda", s.name);
    Manifest man(work_, "postnorm", seed_for("postnorm:" + s.name));
    const std::string in_model = (system_dir(s.name) / "plda.ivpr").string();
    man.input(in_model);
    const PldaModel plda = decode_plda(read_file(in_model), in_model);
    PostNormTransform t = postnorm_fit(plda);
    const int rank = s.eigenvoice_rank == 0 ? static_cast<int>(t.psi.size()) : s.eigenvoice_rank;
    if (rank > t.psi.size())
      throw UsageError(detail::concat("rank ", rank, " exceeds the i-vector dimension ", t.psi.size()));
    t = truncate_eigenvoices(std::move(t), rank);
    man.param("rank", rank);
    const std::string model = (system_dir(s.name) / "postnorm.ivpl").string();
    atomic_write(model, encode_postnorm(t));
    man.output(model);
    auto in = read_sets([&](const std::string& set) { return sys_set_path(s, "shift", set); }, man,
                        {"enroll", "test"});
    std::map<std::string, IVectorSet> out;
    for (const auto& [set, vs] : in)
      out[set] = map_set(vs, [&](const IVector& v) { return postnorm_apply(v, t); }, nullptr, set);
    write_sets(s, "postnorm", out, man);
    man.write(manifest_path("postnorm", s.name));
  }

  void stage_score(const SystemConfig& s) {
    require("postnorm", s.name);
    Manifest man(work_, "score", seed_for("score:" + s.name));
    const std::string model = (system_dir(s.name) / "postnorm.ivpl").string();
    man.input(model);
    const PostNormTransform t = decode_postnorm(read_file(model), model);
    auto in = read_sets([&](const std::string& set) { return sys_set_path(s, "postnorm", set); }, man,
                        {"enroll", "test"});
    man.input(trials_path());
    man.input(enroll_map_path());
    TimingLog timing;
    const ScoreSet scores = score_key(trial_key(), read_enroll_map(enroll_map_path()), in.at("enroll"),
                                      in.at("test"), t, cfg_.workers, &timing);
    write_scores(scores_path(s.name), scores);
    man.output(scores_path(s.name));
    man.write(manifest_path("score", s.name));
    timing.write(log_path("score", s.name));
  }

  void stage_fuse() {
    for (const auto& f : cfg_.fusions) {
      if (!selected(f.name)) continue;
      Manifest man(work_, "fuse", seed_for("fuse:" + f.name));
      man.param("members", f.members);
      std::vector<ScoreSet> sets;
      for (const auto& m : f.members) {
        require("score", m);
        sets.push_back(read_scores(scores_path(m), &trial_key()));
        man.input(scores_path(m));
      }
      write_scores(scores_path(f.name), fuse_scores(sets));
      man.output(scores_path(f.name));
      man.write(manifest_path("fuse", f.name));
    }
  }

  void stage_evaluate() {
    Manifest man(work_, "evaluate", seed_for("evaluate"));
    man.input(trials_path());
    std::vector<std::string> names;
    for (const auto& s : cfg_.systems) {
      require("score", s.name);
      names.push_back(s.name);
    }
    for (const auto& f : cfg_.fusions) {
      require("fuse", f.name);
      names.push_back(f.name);
    }
    std::string summary = "system\teer_percent\tmin_c_primary\teer_equalized_percent\tmin_c_equalized\n";
    for (const auto& n : names) {
      const MetricReport r = report(read_scores(scores_path(n), &trial_key()));
      man.input(scores_path(n));
      const std::string out = (work_ / "reports" / (n + ".txt")).string();
      atomic_write(out, format_report(r));
      man.output(out);
      char buf[256];
      std::snprintf(buf, sizeof(buf), "%s\t%.4f\t%.6f\t%.4f\t%.6f\n", n.c_str(), 100.0 * r.overall.eer,
                    r.overall.min_c_primary, 100.0 * r.eer_equalized, r.min_c_equalized);
      summary += buf;
    }
    const std::string out = (work_ / "reports" / "summary.tsv").string();
    atomic_write(out, summary);
    man.output(out);
    man.param("primary", primary_name());
    man.write(manifest_path("evaluate", "all"));
  }

  PipelineConfig cfg_;
  std::filesystem::path work_;
  std::string only_;
  mutable std::map<std::string, UttList> lists_;
  mutable std::optional<std::vector<TrialKey>> key_;
};

/// Runs every stage and returns the primary report.
inline MetricReport run_pipeline(const PipelineConfig& cfg) {
  Pipeline p(cfg);
  return p.run_all();
}

inline void run_stage(const PipelineConfig& cfg, const std::string& stage, const std::string& only = "") {
  Pipeline p(cfg);
  p.run_stage(stage, only);
}

}  // namespace spkv
