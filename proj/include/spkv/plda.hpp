// spkv/plda.hpp

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

// Two-covariance PLDA: EM estimation of the between-class (B) and
// within-class (W) covariances, the simultaneous diagonalization used as
// post-normalization, eigenvoice-rank truncation, and LLR scoring.
//
// Model for the centred mean m_s of the n_s sessions of speaker s:
//   m_s = x_s + y_s,  x_s ~ N(0, B),  y_s ~ N(0, W / n_s)
// so that a posteriori x_s | m_s ~ N(w_s, M_s) with
//   M_s = (B^-1 + n_s W^-1)^-1,   w_s = n_s M_s W^-1 m_s.

#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "spkv/common.hpp"
#include "spkv/embedspace.hpp"

namespace spkv {

struct PldaModel {
  Vector m_all;
  Matrix b;  // between-class covariance
  Matrix w;  // within-class covariance
};

/// Per-speaker session counts and means plus the pooled within-speaker
/// scatter, everything PLDA estimation needs from the training vectors.
struct PldaStats {
  struct Speaker {
    std::string id;
    int n = 0;
    Vector mean;
  };
  std::vector<Speaker> speakers;
  Matrix within_scatter;  // sum_s sum_{x in s} (x - m_s)(x - m_s)'
  Vector m_all;           // mean of speaker means
  long num_sessions = 0;

  Eigen::Index dim() const { return m_all.size(); }
};

inline PldaStats compute_plda_stats(const IVectorSet& vectors) {
  check_dims(vectors, "PLDA");
  const auto groups = group_by_speaker(vectors);
  if (groups.size() < 2) throw DataError("PLDA: need at least two speakers");
  const Eigen::Index r = vectors.front().w.size();
  PldaStats st;
  st.within_scatter = Matrix::Zero(r, r);
  st.m_all = Vector::Zero(r);
  for (const auto& g : groups) {
    PldaStats::Speaker spk;
    spk.id = g.front()->speaker;
    spk.n = static_cast<int>(g.size());
    spk.mean = Vector::Zero(r);
    for (const auto* v : g) spk.mean += v->w;
    spk.mean /= spk.n;
    for (const auto* v : g)
      st.within_scatter.noalias() += (v->w - spk.mean) * (v->w - spk.mean).transpose();
    st.m_all += spk.mean;
    st.num_sessions += spk.n;
    st.speakers.push_back(std::move(spk));
  }
  st.m_all /= static_cast<double>(st.speakers.size());
  return st;
}

/// Deterministic starting point: pooled within-speaker scatter over N and
/// scatter of speaker means around m_all over S, each with a small ridge.
inline PldaModel init_plda(const PldaStats& st, double ridge = 1e-6) {
  const Eigen::Index r = st.dim();
  const auto s = static_cast<double>(st.speakers.size());
  Matrix between = Matrix::Zero(r, r);
  for (const auto& spk : st.speakers)
    between.noalias() += (spk.mean - st.m_all) * (spk.mean - st.m_all).transpose();
  between /= s;
  const Matrix within = st.within_scatter / static_cast<double>(st.num_sessions);
  if (std::all_of(st.speakers.begin(), st.speakers.end(), [](const auto& k) { return k.n < 2; }))
    log_error("every PLDA training speaker has a single session; "
                "the within-class covariance is ridge only");
  PldaModel m;
  m.m_all = st.m_all;
  m.b = add_ridge(between, within, ridge);
  m.w = add_ridge(within, between, ridge);
  return m;
}

inline PldaModel init_plda(const IVectorSet& vectors, double ridge = 1e-6) {
  return init_plda(compute_plda_stats(vectors), ridge);
}

/// One EM update of (B, W). Speaker means are centred by the fixed m_all of
/// the statistics.
inline PldaModel plda_em_step(const PldaStats& st, const PldaModel& model, int iteration = 0) {
  const Eigen::Index r = st.dim();
  const Matrix eye = Matrix::Identity(r, r);
  auto llt_b = Eigen::LLT<Matrix>(model.b);
  auto llt_w = Eigen::LLT<Matrix>(model.w);
  if (llt_b.info() != Eigen::Success || llt_w.info() != Eigen::Success)
    throw NumericalError(detail::concat("PLDA iteration ", iteration, ": B or W is not positive definite"));
  const Matrix b_inv = llt_b.solve(eye);
  const Matrix w_inv = llt_w.solve(eye);

  Matrix acc_b = Matrix::Zero(r, r);
  Matrix acc_w = st.within_scatter;
  // M_s depends on the speaker only through n_s.
  std::map<int, std::pair<Matrix, Eigen::LLT<Matrix>>> by_count;
  for (const auto& spk : st.speakers) {
    auto it = by_count.find(spk.n);
    if (it == by_count.end()) {
      const Matrix prec = symmetrize(b_inv + spk.n * w_inv);
      Eigen::LLT<Matrix> llt(prec);
      if (llt.info() != Eigen::Success)
        throw NumericalError(detail::concat("PLDA iteration ", iteration, ": posterior precision not SPD"));
      Matrix mixed = symmetrize(llt.solve(eye));
      it = by_count.emplace(spk.n, std::make_pair(std::move(mixed), std::move(llt))).first;
    }
    const Matrix& m_s_cov = it->second.first;
    const Vector centered = spk.mean - st.m_all;
    const Vector w_s = spk.n * it->second.second.solve(w_inv * centered);
    const Vector resid = centered - w_s;
    acc_b.noalias() += w_s * w_s.transpose() + m_s_cov;
    acc_w.noalias() += spk.n * (resid * resid.transpose() + m_s_cov);
  }
  PldaModel out;
  out.m_all = st.m_all;
  out.b = symmetrize(acc_b / static_cast<double>(st.speakers.size()));
  out.w = symmetrize(acc_w / static_cast<double>(st.num_sessions));
  if (Eigen::LLT<Matrix>(out.w).info() != Eigen::Success || !out.b.allFinite() ||
      Eigen::SelfAdjointEigenSolver<Matrix>(out.b, Eigen::EigenvaluesOnly).eigenvalues().minCoeff() <
          -1e-10 * std::max(1.0, out.b.trace()))
    throw NumericalError(detail::concat("PLDA iteration ", iteration, ": B or W lost positive definiteness"));
  return out;
}

inline PldaModel train_plda(const PldaStats& st, PldaModel model, int iterations) {
  for (int it = 0; it < iterations; ++it) model = plda_em_step(st, model, it);
  return model;
}

inline PldaModel train_plda(const IVectorSet& vectors, int iterations, double ridge = 1e-6) {
  const PldaStats st = compute_plda_stats(vectors);
  return train_plda(st, init_plda(st, ridge), iterations);
}

// ---------------------------------------------------------------------------
// Post-normalization.

/// u = A (v - mean), with A W A' = I and A B A' = diag(psi), psi descending.
struct PostNormTransform {
  Matrix a;
  Vector psi;
  Vector mean;
  int rank = 0;

  Eigen::Index dim() const { return a.rows(); }
};

inline PostNormTransform postnorm_fit(const PldaModel& model) {
  const Eigen::Index r = model.w.rows();
  const auto llt = checked_llt(model.w, "postnorm_fit: within-class covariance");
  const Matrix l = llt.matrixL();
  // L^-1 B L^-T
  Matrix tmp = l.triangularView<Eigen::Lower>().solve(model.b);
  Matrix inner = l.triangularView<Eigen::Lower>().solve(tmp.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(inner));
  if (es.info() != Eigen::Success) throw NumericalError("postnorm_fit: eigendecomposition failed");
  PostNormTransform t;
  t.psi.resize(r);
  Matrix p(r, r);
  for (Eigen::Index i = 0; i < r; ++i) {  // eigenvalues come ascending
    t.psi(i) = std::max(0.0, es.eigenvalues()(r - 1 - i));
    p.col(i) = es.eigenvectors().col(r - 1 - i);
  }
  const Matrix l_inv = l.triangularView<Eigen::Lower>().solve(Matrix::Identity(r, r));
  t.a = p.transpose() * l_inv;
  t.mean = model.m_all;
  t.rank = static_cast<int>(r);
  return t;
}

inline Vector postnorm_apply(const Vector& v, const PostNormTransform& t, const Vector& mean) {
  if (v.size() != t.a.cols() || mean.size() != t.a.cols())
    throw DataError(detail::concat("postnorm_apply: dimension ", v.size(), " vs transform ", t.a.cols()));
  return length_normalize(Vector(t.a * (v - mean)));
}

inline IVector postnorm_apply(IVector v, const PostNormTransform& t) {
  v.w = postnorm_apply(v.w, t, t.mean);
  return v;
}

inline PostNormTransform truncate_eigenvoices(PostNormTransform t, int rank) {
  if (rank < 0 || rank > t.psi.size())
    throw UsageError(detail::concat("eigenvoice rank ", rank, " outside [0, ", t.psi.size(), "]"));
  t.psi.tail(t.psi.size() - rank).setZero();
  t.rank = rank;
  return t;
}

// ---------------------------------------------------------------------------
// Scoring.

enum class TrialLabel { kTarget, kNonTarget, kUnknown };

struct Trial {
  std::vector<Vector> enroll;
  Vector test;
  TrialLabel label = TrialLabel::kUnknown;
};

/// Log-likelihood ratio of "same speaker" against "different speakers" for
/// post-normalized vectors. With n enrollment vectors of mean u_bar, test
/// dimension d is N(n psi/(n psi + 1) u_bar_d, 1 + psi/(n psi + 1)) under the
/// target hypothesis and N(0, 1 + psi) otherwise.
inline double score_llr(std::span<const Vector> enroll, const Vector& test, const Vector& psi) {
  if (enroll.empty()) throw DataError("score_trial: no enrollment vectors");
  const Eigen::Index r = psi.size();
  if (test.size() != r) throw DataError("score_trial: test vector dimension mismatch");
  Vector mean = Vector::Zero(r);
  for (const auto& e : enroll) {
    if (e.size() != r) throw DataError("score_trial: enrollment vector dimension mismatch");
    mean += e;
  }
  const double n = static_cast<double>(enroll.size());
  mean /= n;
  double llr = 0.0;
  for (Eigen::Index d = 0; d < r; ++d) {
    const double p = psi(d);
    const double mu = n * p / (n * p + 1.0) * mean(d);
    const double var_same = 1.0 + p / (n * p + 1.0);
    const double var_diff = 1.0 + p;
    const double x = test(d);
    llr += -0.5 * (std::log(var_same) + (x - mu) * (x - mu) / var_same) +
           0.5 * (std::log(var_diff) + x * x / var_diff);
  }
  return llr;
}

inline double score_trial(const Trial& trial, const PostNormTransform& t) {
  return score_llr(trial.enroll, trial.test, t.psi);
}

}  // namespace spkv
