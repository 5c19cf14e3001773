// spkv/synthkit.hpp

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

// Synthetic corpora with known ground truth, and a brute-force LLR oracle.

#pragma once

#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "spkv/common.hpp"
#include "spkv/eval.hpp"
#include "spkv/gmm.hpp"
#include "spkv/ivector.hpp"

namespace spkv {

struct SynthSpec {
  std::uint64_t seed = 0;
  int speakers = 100;
  int sessions_per_speaker = 10;
  Vector b_true;  // diagonal between-speaker variances
  Vector w_true;  // diagonal within-speaker variances
  /// Partition names assigned round-robin to speakers, with their offsets.
  /// Empty: one unnamed partition with no shift.
  std::vector<std::string> partitions;
  std::map<std::string, Vector> shifts;
  std::string speaker_prefix = "spk";

  Eigen::Index dim() const { return b_true.size(); }
};

namespace detail {
inline std::string numbered(const std::string& prefix, int i, int width = 4) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*d", width, i);
  return prefix + buf;
}

inline Vector sample_diag(const Vector& var, Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Vector v(var.size());
  for (Eigen::Index i = 0; i < var.size(); ++i) v(i) = std::sqrt(var(i)) * nd(rng);
  return v;
}
}  // namespace detail

/// Vectors from the two-covariance model: speaker offset x_s ~ N(0, B_true),
/// session noise y ~ N(0, W_true), plus the speaker's partition shift.
inline IVectorSet gen_plda_vectors(const SynthSpec& spec) {
  if (spec.speakers < 1 || spec.sessions_per_speaker < 1)
    throw UsageError("gen_plda_vectors: counts must be positive");
  if (spec.b_true.size() != spec.w_true.size() || spec.b_true.size() == 0)
    throw UsageError("gen_plda_vectors: B_true and W_true must have the same positive dimension");
  if ((spec.b_true.array() < 0).any() || (spec.w_true.array() < 0).any())
    throw UsageError("gen_plda_vectors: variances must be nonnegative");
  Rng rng(spec.seed);
  IVectorSet out;
  out.reserve(static_cast<std::size_t>(spec.speakers) * spec.sessions_per_speaker);
  for (int s = 0; s < spec.speakers; ++s) {
    const std::string spk = detail::numbered(spec.speaker_prefix, s);
    const std::string part =
        spec.partitions.empty() ? std::string() : spec.partitions[s % spec.partitions.size()];
    Vector shift = Vector::Zero(spec.dim());
    if (auto it = spec.shifts.find(part); it != spec.shifts.end()) shift = it->second;
    const Vector x = detail::sample_diag(spec.b_true, rng);
    for (int k = 0; k < spec.sessions_per_speaker; ++k) {
      IVector v;
      v.w = x + detail::sample_diag(spec.w_true, rng) + shift;
      v.speaker = spk;
      v.partition = part;
      v.utterance_id = spk + detail::numbered("-s", k, 3);
      out.push_back(std::move(v));
    }
  }
  return out;
}

/// Mixture parameters for sampling; covariances only need to be PSD.
struct MixtureSpec {
  Vector weights;
  Matrix means;
  std::vector<Matrix> covariances;

  static MixtureSpec from(const GmmModel& m) { return {m.weights(), m.means(), m.covariances()}; }
};

/// Ancestral sampling: component by weight, then a Gaussian draw. Component
/// indices are written to *components if given.
inline Matrix gen_gmm_frames(const MixtureSpec& mix, Eigen::Index num_frames, std::uint64_t seed,
                             std::vector<int>* components = nullptr) {
  const Eigen::Index c_max = mix.weights.size(), d = mix.means.cols();
  std::vector<Matrix> roots(c_max);
  for (Eigen::Index c = 0; c < c_max; ++c) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(mix.covariances[c]));
    roots[c] = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  }
  Rng rng(seed);
  std::discrete_distribution<int> pick(mix.weights.data(), mix.weights.data() + c_max);
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix out(num_frames, d);
  Vector z(d);
  if (components) components->resize(static_cast<std::size_t>(num_frames));
  for (Eigen::Index t = 0; t < num_frames; ++t) {
    const int c = pick(rng);
    for (Eigen::Index k = 0; k < d; ++k) z(k) = nd(rng);
    out.row(t) = (mix.means.row(c).transpose() + roots[c] * z).transpose();
    if (components) (*components)[t] = c;
  }
  return out;
}

inline Matrix gen_gmm_frames(const GmmModel& model, Eigen::Index num_frames, std::uint64_t seed,
                             std::vector<int>* components = nullptr) {
  return gen_gmm_frames(MixtureSpec::from(model), num_frames, seed, components);
}

/// Utterances from the total-variability model: w ~ N(0, I), frames drawn
/// from component c (by weight) as N(mean_c + T_c w, Sigma_c). Statistics use
/// the true component of each frame as a hard alignment.
struct TvCorpus {
  std::vector<SufficientStats> stats;
  Matrix w_true;  // utterances x R
};

inline TvCorpus gen_tv_corpus(const GmmModel& ubm, const Matrix& t_true, int utterances,
                              int frames_per_utterance, std::uint64_t seed) {
  const Eigen::Index c_max = ubm.num_components(), d = ubm.dim(), r = t_true.cols();
  if (t_true.rows() != c_max * d) throw UsageError("gen_tv_corpus: T must have C*D rows");
  Rng rng(seed);
  std::discrete_distribution<int> pick(ubm.weights().data(), ubm.weights().data() + c_max);
  TvCorpus out;
  out.w_true = random_normal(utterances, r, rng);
  for (int u = 0; u < utterances; ++u) {
    SufficientStats s;
    s.n = Vector::Zero(c_max);
    s.f = Matrix::Zero(c_max, d);
    s.utterance_id = detail::numbered("utt", u, 5);
    const Vector w = out.w_true.row(u).transpose();
    for (int k = 0; k < frames_per_utterance; ++k) {
      const int c = pick(rng);
      const Vector x = ubm.means().row(c).transpose() + t_true.middleRows(c * d, d) * w +
                       ubm.cholesky(c) * random_normal(d, 1, rng);
      s.n(c) += 1.0;
      s.f.row(c) += x.transpose();
    }
    out.stats.push_back(std::move(s));
  }
  return out;
}

/// Brute-force target/nontarget LLR for one post-normalized dimension:
/// the latent speaker value y ~ N(0, psi) is integrated on a trapezoid grid.
/// Enrollment enters through its mean u_bar ~ N(y, 1/n); the test value is
/// u ~ N(y, 1).
inline double llr_oracle_1d(double psi, int n, double u_enroll_mean, double u_test,
                            int grid_points = 100000) {
  if (psi < 0.0 || n < 1) throw UsageError("llr_oracle_1d: need psi >= 0 and n >= 1");
  if (psi == 0.0) return 0.0;
  const double half = 10.0 * std::sqrt(psi + 1.0);
  const double h = 2.0 * half / (grid_points - 1);
  auto normal = [](double x, double mean, double var) {
    return std::exp(-0.5 * (x - mean) * (x - mean) / var) / std::sqrt(2.0 * std::numbers::pi * var);
  };
  double joint = 0.0, p_enroll = 0.0, p_test = 0.0;
  for (int i = 0; i < grid_points; ++i) {
    const double y = -half + i * h;
    const double wt = (i == 0 || i == grid_points - 1) ? 0.5 * h : h;
    const double prior = normal(y, 0.0, psi);
    const double le = normal(u_enroll_mean, y, 1.0 / n);
    const double lt = normal(u_test, y, 1.0);
    joint += wt * prior * le * lt;
    p_enroll += wt * prior * le;
    p_test += wt * prior * lt;
  }
  return std::log(joint) - std::log(p_enroll) - std::log(p_test);
}

// ---------------------------------------------------------------------------
// Synthetic speaker-recognition evaluation: training speakers, disjoint
// evaluation speakers with enrollment and test segments, unlabeled
// in-domain development vectors, and a full trial key.

struct TrialKey {
  std::string enroll_id;
  std::string test_id;
  TrialLabel label = TrialLabel::kUnknown;
  std::string partition;
};

struct SreSpec {
  std::uint64_t seed = 0;
  Vector b_true;
  Vector w_true;
  int train_speakers = 300;
  int train_sessions = 8;
  std::vector<std::string> train_partitions{"sub1", "sub2", "sub3", "sub4"};
  double train_shift_scale = 0.0;  // random per-partition offsets of this norm
  int eval_speakers = 60;
  int enroll_sessions = 3;
  int test_sessions = 2;
  std::vector<std::string> eval_partitions{"eval_a", "eval_b"};
  Vector test_shift;  // added to test and dev vectors only (may be empty)
  int dev_vectors = 200;
};

struct SreCorpus {
  IVectorSet train, enroll, test, dev;
  std::vector<TrialKey> trials;
  /// enroll model id -> utterance ids
  std::vector<std::pair<std::string, std::vector<std::string>>> models;
};

inline SreCorpus gen_sre_corpus(const SreSpec& spec) {
  const Eigen::Index r = spec.b_true.size();
  SreCorpus corpus;
  Rng shift_rng(derive_seed(spec.seed, "train-shifts"));

  SynthSpec tr;
  tr.seed = derive_seed(spec.seed, "train");
  tr.speakers = spec.train_speakers;
  tr.sessions_per_speaker = spec.train_sessions;
  tr.b_true = spec.b_true;
  tr.w_true = spec.w_true;
  tr.partitions = spec.train_partitions;
  tr.speaker_prefix = "trn";
  for (const auto& p : spec.train_partitions) {
    Vector dir = random_normal(r, 1, shift_rng);
    tr.shifts[p] = spec.train_shift_scale > 0.0 ? Vector(spec.train_shift_scale * dir / dir.norm())
                                                : Vector::Zero(r);
  }
  corpus.train = gen_plda_vectors(tr);

  // Evaluation speakers: the first enroll_sessions sessions enroll, the rest
  // are test segments.
  SynthSpec ev = tr;
  ev.seed = derive_seed(spec.seed, "eval");
  ev.speakers = spec.eval_speakers;
  ev.sessions_per_speaker = spec.enroll_sessions + spec.test_sessions;
  ev.partitions = spec.eval_partitions;
  ev.shifts.clear();
  ev.speaker_prefix = "evl";
  const IVectorSet eval = gen_plda_vectors(ev);
  const Vector test_shift = spec.test_shift.size() ? spec.test_shift : Vector::Zero(r);
  std::map<std::string, std::vector<std::string>> model_utts;
  std::map<std::string, std::string> model_part;
  for (std::size_t i = 0; i < eval.size(); ++i) {
    const int k = static_cast<int>(i % static_cast<std::size_t>(ev.sessions_per_speaker));
    if (k < spec.enroll_sessions) {
      corpus.enroll.push_back(eval[i]);
      model_utts[eval[i].speaker].push_back(eval[i].utterance_id);
      model_part[eval[i].speaker] = eval[i].partition;
    } else {
      IVector t = eval[i];
      t.w += test_shift;
      corpus.test.push_back(std::move(t));
    }
  }
  for (const auto& [m, utts] : model_utts) corpus.models.emplace_back(m, utts);
  for (const auto& [m, utts] : corpus.models)
    for (const auto& t : corpus.test) {
      if (t.partition != model_part[m]) continue;  // trials stay within a partition
      corpus.trials.push_back({m, t.utterance_id,
                               t.speaker == m ? TrialLabel::kTarget : TrialLabel::kNonTarget,
                               t.partition});
    }

  // Unlabeled in-domain development data: fresh speakers, one session each.
  if (spec.dev_vectors == 0) return corpus;
  SynthSpec dv = ev;
  dv.seed = derive_seed(spec.seed, "dev");
  dv.speakers = spec.dev_vectors;
  dv.sessions_per_speaker = 1;
  dv.speaker_prefix = "dev";
  corpus.dev = gen_plda_vectors(dv);
  for (auto& v : corpus.dev) {
    v.w += test_shift;
    v.speaker.clear();
    v.partition = "dev";
  }
  return corpus;
}

/// Adds independent N(0, sigma^2 I) noise to every vector.
inline IVectorSet add_noise(IVectorSet vs, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> nd(0.0, sigma);
  for (auto& v : vs)
    for (Eigen::Index i = 0; i < v.w.size(); ++i) v.w(i) += nd(rng);
  return vs;
}

}  // namespace spkv
