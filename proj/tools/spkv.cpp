// tools/spkv.cpp

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

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spkv/spkv.hpp"

namespace fs = std::filesystem;
using namespace spkv;

namespace {

struct Globals {
  std::string config;
  std::string stage;
  std::string system;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;

  int num_workers() const { return workers.value_or(1); }
  std::uint64_t root_seed() const { return seed.value_or(0); }
};

std::string in_dir(const std::string& dir, const std::string& utt, const std::string& ext) {
  return (fs::path(dir) / (utt + ext)).string();
}

std::vector<Matrix> load_voiced(const UttList& list, const std::string& feat_dir, const std::string& vad_dir,
                                int workers) {
  std::vector<Matrix> out(list.size());
  parallel_for(list.size(), workers, [&](std::size_t i) {
    FeatureMatrix f;
    f.data = read_ivmx(in_dir(feat_dir, list[i].utt, ".ivmx"));
    if (vad_dir.empty()) {
      out[i] = f.data;
    } else {
      out[i] = select_voiced(f, vad_from_matrix(read_ivmx(in_dir(vad_dir, list[i].utt, ".ivmx")))).data;
    }
  });
  return out;
}

std::vector<SufficientStats> load_stats(const UttList& list, const std::string& dir) {
  std::vector<SufficientStats> out;
  for (const auto& u : list) {
    const std::string p = in_dir(dir, u.utt, ".ivst");
    out.push_back(decode_stats(read_file(p), p));
    out.back().utterance_id = u.utt;
  }
  return out;
}

std::map<std::string, IVectorSet> by_partition(const IVectorSet& vs, const std::string& fallback) {
  std::map<std::string, IVectorSet> out;
  for (const auto& v : vs) out[v.partition.empty() ? fallback : v.partition].push_back(v);
  return out;
}

template <typename Fn>
IVectorSet map_vectors(const IVectorSet& in, int workers, Fn&& fn) {
  IVectorSet out(in.size());
  parallel_for(in.size(), workers, [&](std::size_t i) { out[i] = fn(in[i]); });
  return out;
}

void run_config(const Globals& g) {
  if (g.config.empty()) throw UsageError("no subcommand given and no --config (see --help)");
  PipelineConfig cfg = load_config(g.config);
  if (g.workers) cfg.workers = *g.workers;
  if (g.seed) cfg.seed = *g.seed;
  Pipeline p(cfg);
  if (!g.stage.empty()) {
    p.run_stage(g.stage, g.system);
    return;
  }
  if (!g.system.empty()) throw UsageError("--system needs --stage");
  const MetricReport r = p.run_all();
  std::cout << "primary: " << p.primary_name() << "\n" << format_report(r);
}

}  // namespace

int main(int argc, char** argv) {
  const char* usage =
      "i-vector / PLDA speaker verification toolkit.\n"
      "Usage:  spkv --config <pipeline.ini> [--stage <stage> [--system <name>]]\n"
      "        spkv <subcommand> [options]\n";
  CLI::App app{usage, "spkv"};
  app.require_subcommand(0, 1);
  Globals g;
  app.add_option("--config", g.config, "Pipeline config (INI)");
  app.add_option("--stage", g.stage,
                 "Run a single stage: features, vad, stats, ivector, lw, shift, plda, postnorm, score, fuse, evaluate");
  app.add_option("--system", g.system, "Restrict --stage to one sub-system or fusion");
  app.add_option("--workers", g.workers, "Worker threads for per-utterance work")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "Root random seed (overrides the config)");

  // --- extract-features
  {
    auto* c = app.add_subcommand("extract-features", "Cepstra + log-energy, deltas and sliding CMN for each WAV");
    auto list = std::make_shared<std::string>(), out = std::make_shared<std::string>();
    auto kind = std::make_shared<std::string>("mfcc");
    auto fc = std::make_shared<FrontendConfig>();
    c->add_option("-l,--list", *list, "Utterance list (utt, wav path, speaker, partition)")->required();
    c->add_option("-o,--out-dir", *out, "Output directory (<utt>.ivmx)")->required();
    c->add_option("--kind", *kind, "mfcc or plp")->check(CLI::IsMember({"mfcc", "plp"}));
    c->add_option("--cmn-window", fc->cmn_window_s, "CMN window in seconds");
    c->add_option("--num-ceps", fc->num_ceps, "Cepstra besides log-energy");
    c->callback([=, &g] {
      const auto l = read_utt_list(*list);
      const FeatureKind k = feature_kind_from_string(*kind);
      parallel_for(l.size(), g.num_workers(), [&](std::size_t i) {
        write_ivmx(in_dir(*out, l[i].utt, ".ivmx"), extract_features(read_wav(l[i].path), k, *fc).data);
      });
    });
  }
  // --- vad
  {
    auto* c = app.add_subcommand("vad", "Energy-threshold VAD with majority consensus");
    auto list = std::make_shared<std::string>(), feats = std::make_shared<std::string>(),
         out = std::make_shared<std::string>();
    auto vc = std::make_shared<VadConfig>();
    c->add_option("-l,--list", *list, "Utterance list")->required();
    c->add_option("--features", *feats, "Feature directory (energy in column 0)")->required();
    c->add_option("-o,--out-dir", *out, "Output directory (<utt>.ivmx, 1 x T of 0/1)")->required();
    c->add_option("--offset", vc->offset_scale, "Threshold = mean + offset * std of log-energy");
    c->add_option("--window", vc->window, "Consensus window (frames)");
    c->callback([=, &g] {
      const auto l = read_utt_list(*list);
      parallel_for(l.size(), g.num_workers(), [&](std::size_t i) {
        FeatureMatrix f;
        f.data = read_ivmx(in_dir(*feats, l[i].utt, ".ivmx"));
        write_ivmx(in_dir(*out, l[i].utt, ".ivmx"), vad_to_matrix(compute_vad(f, *vc)));
      });
    });
  }
  // --- train-ubm
  {
    auto* c = app.add_subcommand("train-ubm", "EM training of a full-covariance UBM");
    auto list = std::make_shared<std::string>(), feats = std::make_shared<std::string>(),
         vad = std::make_shared<std::string>(), out = std::make_shared<std::string>();
    auto gc = std::make_shared<GmmTrainConfig>();
    c->add_option("-l,--list", *list, "Training utterance list")->required();
    c->add_option("--features", *feats, "Feature directory")->required();
    c->add_option("--vad", *vad, "VAD directory (omit to use every frame)");
    c->add_option("-o,--out", *out, "Output model (.ivgm)")->required();
    c->add_option("--components", gc->components, "Number of Gaussians");
    c->add_option("--iterations", gc->iterations, "EM iterations after the last split");
    c->add_flag("--diagonal", gc->diagonal, "Diagonal covariances");
    c->callback([=, &g] {
      GmmTrainConfig cfg = *gc;
      cfg.seed = derive_seed(g.root_seed(), "ubm");
      const auto frames = load_voiced(read_utt_list(*list), *feats, *vad, g.num_workers());
      atomic_write(*out, encode_gmm(train_gmm_em(frames, cfg)));
    });
  }
  // --- couple-ubm
  {
    auto* c = app.add_subcommand("couple-ubm", "MFCC-UBM coupled to a PLP-UBM by one M-step");
    auto list = std::make_shared<std::string>(), plp_ubm = std::make_shared<std::string>(),
         mfcc = std::make_shared<std::string>(), plp = std::make_shared<std::string>(),
         vad = std::make_shared<std::string>(), out = std::make_shared<std::string>();
    c->add_option("-l,--list", *list, "Training utterance list")->required();
    c->add_option("--plp-ubm", *plp_ubm, "PLP UBM (.ivgm)")->required();
    c->add_option("--mfcc", *mfcc, "MFCC feature directory")->required();
    c->add_option("--plp", *plp, "PLP feature directory")->required();
    c->add_option("--vad", *vad, "VAD directory");
    c->add_option("-o,--out", *out, "Output MFCC UBM (.ivgm)")->required();
    c->callback([=, &g] {
      const auto l = read_utt_list(*list);
      const GmmModel pu = decode_gmm(read_file(*plp_ubm), *plp_ubm);
      const auto m = load_voiced(l, *mfcc, *vad, g.num_workers());
      const auto p = load_voiced(l, *plp, *vad, g.num_workers());
      atomic_write(*out, encode_gmm(couple_ubm(pu, m, p).mfcc_ubm));
    });
  }
  // --- stats
  {
    auto* c = app.add_subcommand("stats", "Zeroth- and first-order statistics per utterance");
    auto list = std::make_shared<std::string>(), feats = std::make_shared<std::string>(),
         vad = std::make_shared<std::string>(), ubm = std::make_shared<std::string>(),
         post_dir = std::make_shared<std::string>(), plp_ubm = std::make_shared<std::string>(),
         mfcc_ubm = std::make_shared<std::string>(), plp = std::make_shared<std::string>(),
         out = std::make_shared<std::string>();
    auto prune = std::make_shared<double>(1e-8);
    c->add_option("-l,--list", *list, "Utterance list")->required();
    c->add_option("--features", *feats, "Feature directory for first-order stats")->required();
    c->add_option("--vad", *vad, "VAD directory");
    c->add_option("--ubm", *ubm, "UBM giving the posteriors (.ivgm)");
    c->add_option("--posterior-dir", *post_dir, "External posteriors, <utt>.ivmx (voiced frames x C)");
    c->add_option("--plp-ubm", *plp_ubm, "Two-feats: PLP UBM");
    c->add_option("--mfcc-ubm", *mfcc_ubm, "Two-feats: coupled MFCC UBM (--features must be MFCC)");
    c->add_option("--plp", *plp, "Two-feats: PLP feature directory");
    c->add_option("--prune", *prune, "Posterior pruning threshold");
    c->add_option("-o,--out-dir", *out, "Output directory (<utt>.ivst)")->required();
    c->callback([=, &g] {
      const int modes = !ubm->empty() + !post_dir->empty() + !plp_ubm->empty();
      if (modes != 1) throw UsageError("stats: give exactly one of --ubm, --posterior-dir, --plp-ubm");
      const auto l = read_utt_list(*list);
      const auto x = load_voiced(l, *feats, *vad, g.num_workers());
      std::optional<GmmModel> u;
      std::optional<CoupledUbm> cu;
      std::vector<Matrix> y;
      if (!ubm->empty()) u = decode_gmm(read_file(*ubm), *ubm);
      if (!plp_ubm->empty()) {
        if (mfcc_ubm->empty() || plp->empty()) throw UsageError("stats: two-feats needs --mfcc-ubm and --plp");
        cu = CoupledUbm{decode_gmm(read_file(*plp_ubm), *plp_ubm), decode_gmm(read_file(*mfcc_ubm), *mfcc_ubm)};
        y = load_voiced(l, *plp, *vad, g.num_workers());
      }
      parallel_for(l.size(), g.num_workers(), [&](std::size_t i) {
        Matrix post;
        if (u) post = gmm_posteriors(*u, x[i], *prune);
        else if (cu) post = two_feats_posteriors(*cu, y[i], x[i], *prune);
        else post = read_ivmx(in_dir(*post_dir, l[i].utt, ".ivmx"));
        atomic_write(in_dir(*out, l[i].utt, ".ivst"), encode_stats(accumulate_stats(post, x[i], l[i].utt)));
      });
    });
  }
  // --- train-tv
  {
    auto* c = app.add_subcommand("train-tv", "EM training of the total-variability matrix");
    auto list = std::make_shared<std::string>(), stats = std::make_shared<std::string>(),
         ubm = std::make_shared<std::string>(), out = std::make_shared<std::string>();
    auto tc = std::make_shared<TvConfig>();
    c->add_option("-l,--list", *list, "Training utterance list")->required();
    c->add_option("--stats", *stats, "Statistics directory")->required();
    c->add_option("--ubm", *ubm, "UBM (.ivgm)")->required();
    c->add_option("-o,--out", *out, "Output model (.ivtv)")->required();
    c->add_option("--rank", tc->rank, "i-vector dimension");
    c->add_option("--iterations", tc->iterations, "EM iterations");
    c->add_flag("--diagonal", tc->diagonal, "Use only the UBM covariance diagonals");
    c->callback([=, &g] {
      TvConfig cfg = *tc;
      cfg.seed = derive_seed(g.root_seed(), "tv");
      const GmmModel u = decode_gmm(read_file(*ubm), *ubm);
      atomic_write(*out, encode_tv(train_tv_em(load_stats(read_utt_list(*list), *stats), u, cfg)));
    });
  }
  // --- extract-ivec
  {
    auto* c = app.add_subcommand("extract-ivec", "Posterior-mean i-vectors");
    auto list = std::make_shared<std::string>(), stats = std::make_shared<std::string>(),
         tv = std::make_shared<std::string>(), out = std::make_shared<std::string>();
    c->add_option("-l,--list", *list, "Utterance list")->required();
    c->add_option("--stats", *stats, "Statistics directory")->required();
    c->add_option("--tv", *tv, "TV model (.ivtv)")->required();
    c->add_option("-o,--out", *out, "Output i-vectors (.ivmx plus .tsv sidecar)")->required();
    c->callback([=, &g] {
      const auto l = read_utt_list(*list);
      const auto st = load_stats(l, *stats);
      const auto model = decode_tv(read_file(*tv), *tv);
      IVectorSet vs(l.size());
      parallel_for(l.size(), g.num_workers(), [&](std::size_t i) {
        vs[i] = extract_ivector(st[i], model);
        vs[i].utterance_id = l[i].utt;
        vs[i].speaker = l[i].speaker;
        vs[i].partition = l[i].partition;
      });
      write_ivectors(*out, vs);
    });
  }
  // --- fit-lw / apply-lw
  {
    auto* c = app.add_subcommand("fit-lw", "Within-class whitening estimated on labeled i-vectors");
    auto in = std::make_shared<std::string>(), out = std::make_shared<std::string>();
    auto ridge = std::make_shared<double>(1e-6);
    c->add_option("-i,--in", *in, "Training i-vectors")->required();
    c->add_option("-o,--out", *out, "Output transform (.ivlw)")->required();
    c->add_option("--ridge", *ridge, "Ridge factor (times trace/R)");
    c->callback([=] { atomic_write(*out, encode_lw(fit_lw(read_ivectors(*in), *ridge))); });
  }
  {
    auto* c = app.add_subcommand("apply-lw", "Whitening followed by length normalization");
    auto in = std::make_shared<std::string>(), model = std::make_shared<std::string>(),
         out = std::make_shared<std::string>();
    c->add_option("-i,--in", *in, "Input i-vectors")->required();
    c->add_option("-m,--model", *model, "Transform (.ivlw)")->required();
    c->add_option("-o,--out", *out, "Output i-vectors")->required();
    c->callback([=, &g] {
      const LwTransform t = decode_lw(read_file(*model), *model);
      write_ivectors(*out, map_vectors(read_ivectors(*in), g.num_workers(),
                                       [&](const IVector& v) { return apply_lw(v, t); }));
    });
  }
  // --- fit-idvc / apply-idvc
  {
    auto* c = app.add_subcommand("fit-idvc", "Subspace of subset means; subsets are sidecar partitions");
    auto ins = std::make_shared<std::vector<std::string>>();
    auto out = std::make_shared<std::string>();
    auto ic = std::make_shared<IdvcConfig>();
    auto no_center = std::make_shared<bool>(false);
    c->add_option("-i,--in", *ins, "I-vector files; each partition (or each file, if unpartitioned) is a subset")
        ->required();
    c->add_option("-o,--out", *out, "Output model (.ivid)")->required();
    c->add_option("--max-rank", ic->max_rank, "Cap on removed directions (0: numerical rank)");
    c->add_flag("--no-center", *no_center, "Do not center the subset means");
    c->callback([=] {
      std::map<std::string, IVectorSet> subsets;
      for (const auto& f : *ins)
        for (auto& [k, v] : by_partition(read_ivectors(f), fs::path(f).stem().string())) {
          auto& dst = subsets[k];
          dst.insert(dst.end(), v.begin(), v.end());
        }
      IdvcConfig cfg = *ic;
      cfg.center = !*no_center;
      const IdvcModel m = fit_idvc(subsets, cfg);
      log_info("IDVC: ", m.rank(), " direction(s) from ", subsets.size(), " subsets");
      atomic_write(*out, encode_idvc(m));
    });
  }
  {
    auto* c = app.add_subcommand("apply-idvc",
                                 "Projection away from the IDVC subspace in complement coordinates, then length "
                                 "normalization");
    auto in = std::make_shared<std::string>(), model = std::make_shared<std::string>(),
         out = std::make_shared<std::string>();
    auto keep_dim = std::make_shared<bool>(false);
    c->add_option("-i,--in", *in, "Input i-vectors")->required();
    c->add_option("-m,--model", *model, "Model (.ivid)")->required();
    c->add_option("-o,--out", *out, "Output i-vectors")->required();
    c->add_flag("--keep-dim", *keep_dim, "Keep the original coordinates (K null directions remain)");
    c->callback([=, &g] {
      const IdvcModel m = decode_idvc(read_file(*model), *model);
      const Matrix q = idvc_complement(m);
      write_ivectors(*out, map_vectors(read_ivectors(*in), g.num_workers(), [&](const IVector& v) {
                       return length_normalize(*keep_dim ? apply_idvc(v, m) : apply_idvc_reduced(v, m, q));
                     }));
    });
  }
  // --- mean-shift
  {
    auto* c = app.add_subcommand("mean-shift", "Subtract the mean of unlabeled in-domain vectors");
    auto dev = std::make_shared<std::string>(), in = std::make_shared<std::string>(),
         out = std::make_shared<std::string>(), side = std::make_shared<std::string>("test");
    auto shift_enroll = std::make_shared<bool>(false);
    c->add_option("--dev", *dev, "Development i-vectors")->required();
    c->add_option("-i,--in", *in, "Input i-vectors")->required();
    c->add_option("-o,--out", *out, "Output i-vectors")->required();
    c->add_option("--side", *side, "enroll or test")->check(CLI::IsMember({"enroll", "test"}));
    c->add_flag("--shift-enroll", *shift_enroll, "Also shift enrollment vectors");
    c->callback([=, &g] {
      const MeanShift m = fit_mean_shift(read_ivectors(*dev));
      const Side s = *side == "test" ? Side::kTest : Side::kEnroll;
      write_ivectors(*out, map_vectors(read_ivectors(*in), g.num_workers(), [&](const IVector& v) {
                       return length_normalize(apply_mean_shift(v, m, s, *shift_enroll));
                     }));
    });
  }
  // --- train-plda
  {
    auto* c = app.add_subcommand("train-plda", "Two-covariance PLDA by EM");
    auto in = std::make_shared<std::string>(), out = std::make_shared<std::string>();
    auto iters = std::make_shared<int>(10);
    auto ridge = std::make_shared<double>(1e-6);
    c->add_option("-i,--in", *in, "Labeled training i-vectors")->required();
    c->add_option("-o,--out", *out, "Output model (.ivpr)")->required();
    c->add_option("--iterations", *iters, "EM iterations");
    c->add_option("--ridge", *ridge, "Ridge factor for the initial W");
    c->callback([=] { atomic_write(*out, encode_plda(train_plda(read_ivectors(*in), *iters, *ridge))); });
  }
  // --- postnorm
  {
    auto* c = app.add_subcommand("postnorm", "Simultaneous diagonalization of W and B for scoring");
    auto plda = std::make_shared<std::string>(), out = std::make_shared<std::string>(),
         apply_in = std::make_shared<std::string>(), apply_out = std::make_shared<std::string>();
    auto rank = std::make_shared<int>(0);
    c->add_option("--plda", *plda, "PLDA model (.ivpr)")->required();
    c->add_option("-o,--out", *out, "Output scoring model (.ivpl)")->required();
    c->add_option("--rank", *rank, "Eigenvoice rank (0: full)");
    c->add_option("--apply-in", *apply_in, "Also transform these i-vectors");
    c->add_option("--apply-out", *apply_out, "Destination of the transformed i-vectors");
    c->callback([=, &g] {
      PostNormTransform t = postnorm_fit(decode_plda(read_file(*plda), *plda));
      t = truncate_eigenvoices(std::move(t), *rank == 0 ? static_cast<int>(t.psi.size()) : *rank);
      atomic_write(*out, encode_postnorm(t));
      if (apply_in->empty() != apply_out->empty()) throw UsageError("postnorm: give both --apply-in and --apply-out");
      if (!apply_in->empty())
        write_ivectors(*apply_out, map_vectors(read_ivectors(*apply_in), g.num_workers(),
                                               [&](const IVector& v) { return postnorm_apply(v, t); }));
    });
  }
  // --- score
  {
    auto* c = app.add_subcommand("score", "PLDA log-likelihood ratios for a trial list");
    auto model = std::make_shared<std::string>(), enroll = std::make_shared<std::string>(),
         map = std::make_shared<std::string>(), test = std::make_shared<std::string>(),
         trials = std::make_shared<std::string>(), out = std::make_shared<std::string>();
    c->add_option("--model", *model, "Scoring model (.ivpl)")->required();
    c->add_option("--enroll", *enroll, "Post-normalized enrollment i-vectors")->required();
    c->add_option("--enroll-map", *map, "Enrollment map (model, utt)")->required();
    c->add_option("--test", *test, "Post-normalized test i-vectors")->required();
    c->add_option("--trials", *trials, "Trial list (enroll, test[, label, partition])")->required();
    c->add_option("-o,--out", *out, "Output scores")->required();
    c->callback([=, &g] {
      const PostNormTransform t = decode_postnorm(read_file(*model), *model);
      write_scores(*out, score_key(read_trial_key(*trials), read_enroll_map(*map), read_ivectors(*enroll),
                                   read_ivectors(*test), t, g.num_workers()));
    });
  }
  // --- fuse
  {
    auto* c = app.add_subcommand("fuse", "Equal-weight mean of score files");
    auto ins = std::make_shared<std::vector<std::string>>();
    auto out = std::make_shared<std::string>();
    c->add_option("-i,--in", *ins, "Member score files")->required();
    c->add_option("-o,--out", *out, "Output scores")->required();
    c->callback([=] {
      std::vector<ScoreSet> sets;
      for (const auto& f : *ins) sets.push_back(read_scores(f));
      write_scores(*out, fuse_scores(sets));
    });
  }
  // --- evaluate
  {
    auto* c = app.add_subcommand("evaluate", "EER and minC_primary, pooled and per partition");
    auto scores = std::make_shared<std::string>(), trials = std::make_shared<std::string>(),
         out = std::make_shared<std::string>();
    c->add_option("--scores", *scores, "Score file")->required();
    c->add_option("--trials", *trials, "Trial key with labels")->required();
    c->add_option("-o,--out", *out, "Also write the report here");
    c->callback([=] {
      const auto key = read_trial_key(*trials);
      const std::string text = format_report(report(read_scores(*scores, &key)));
      std::cout << text;
      if (!out->empty()) atomic_write(*out, text);
    });
  }
  // --- synth
  {
    auto* c = app.add_subcommand("synth", "Write a synthetic i-vector corpus with trial key and enrollment map");
    auto out = std::make_shared<std::string>();
    auto sc = std::make_shared<SyntheticConfig>();
    c->add_option("-o,--out-dir", *out, "Output directory")->required();
    c->add_option("--dim", sc->dim, "Vector dimension");
    c->add_option("--between", sc->between, "Between-speaker variance of the first dimension");
    c->add_option("--between-decay", sc->between_decay, "Per-dimension decay of the between variance");
    c->add_option("--within", sc->within, "Within-speaker variance");
    c->add_option("--train-speakers", sc->train_speakers, "Training speakers");
    c->add_option("--train-sessions", sc->train_sessions, "Sessions per training speaker");
    c->add_option("--eval-speakers", sc->eval_speakers, "Evaluation speakers");
    c->add_option("--test-shift", sc->test_shift, "Norm of the offset added to test and dev vectors");
    c->add_option("--train-shift", sc->train_shift, "Norm of random per-partition training offsets");
    c->add_option("--dev-vectors", sc->dev_vectors, "Unlabeled development vectors");
    c->callback([=, &g] {
      SyntheticConfig y = *sc;
      if (!g.config.empty()) y = load_config(g.config).synthetic;
      const SreCorpus corpus = gen_sre_corpus(to_sre_spec(y, derive_seed(g.root_seed(), "corpus")));
      const fs::path d(*out);
      write_ivectors((d / "train.ivmx").string(), corpus.train);
      write_ivectors((d / "enroll.ivmx").string(), corpus.enroll);
      write_ivectors((d / "test.ivmx").string(), corpus.test);
      if (!corpus.dev.empty()) write_ivectors((d / "dev.ivmx").string(), corpus.dev);
      write_trial_key((d / "trials.tsv").string(), corpus.trials);
      write_enroll_map((d / "enroll_map.tsv").string(), corpus.models);
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const Error& e) {
    std::cerr << "ERROR (spkv) " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "ERROR (spkv) " << e.what() << '\n';
    return 2;
  }
  try {
    if (app.get_subcommands().empty()) run_config(g);
  } catch (const Error& e) {
    std::cerr << "ERROR (spkv) " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "ERROR (spkv) " << e.what() << '\n';
    return 2;
  }
  return 0;
}
