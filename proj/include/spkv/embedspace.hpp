// spkv/embedspace.hpp

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

// Embedding-space transforms applied before PLDA: within-class whitening
// with length normalization, inter-dataset variability compensation, and
// mean shifting.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "spkv/common.hpp"

namespace spkv {

/// Groups vectors by speaker label, preserving first-seen order.
inline std::vector<std::vector<const IVector*>> group_by_speaker(const IVectorSet& vs) {
  std::map<std::string, std::size_t> index;
  std::vector<std::vector<const IVector*>> groups;
  for (const auto& v : vs) {
    if (v.speaker.empty())
      throw DataError("vector '" + v.utterance_id + "' has no speaker label");
    auto [it, inserted] = index.emplace(v.speaker, groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(&v);
  }
  return groups;
}

inline void check_dims(const IVectorSet& vs, const char* what) {
  if (vs.empty()) throw DataError(std::string(what) + ": empty vector set");
  const auto r = vs.front().w.size();
  for (const auto& v : vs)
    if (v.w.size() != r)
      throw DataError(detail::concat(what, ": vector '", v.utterance_id, "' has dimension ",
                                     v.w.size(), ", expected ", r));
}

/// Adds 1e-6 * trace(m)/R * I. When m has zero trace the scale falls back to
/// the trace of `fallback`; the result is checked for positive definiteness.
inline Matrix add_ridge(const Matrix& m, const Matrix& fallback, double factor = 1e-6) {
  const auto r = static_cast<double>(m.rows());
  double scale = m.trace() / r;
  if (!(scale > 0.0)) scale = fallback.trace() / r;
  return m + factor * scale * Matrix::Identity(m.rows(), m.cols());
}

// ---------------------------------------------------------------------------
// LW: W-standardization followed by length normalization.

struct LwTransform {
  Vector mu;
  Matrix w;       // within-class covariance (ridge included)
  Matrix w_chol;  // lower Cholesky factor of w

  static LwTransform from_covariance(Vector mu, Matrix w) {
    LwTransform t;
    t.mu = std::move(mu);
    t.w = symmetrize(w);
    Eigen::LLT<Matrix> llt(t.w);
    if (llt.info() != Eigen::Success || !t.w.allFinite())
      throw NumericalError("within-class covariance is singular; increase the ridge regularization");
    t.w_chol = llt.matrixL();
    return t;
  }
};

inline LwTransform fit_lw(const IVectorSet& vectors, double ridge = 1e-6) {
  check_dims(vectors, "fit_lw");
  const auto groups = group_by_speaker(vectors);
  if (groups.size() < 2) throw DataError("fit_lw: need at least two speakers");
  if (std::none_of(groups.begin(), groups.end(), [](const auto& g) { return g.size() >= 2; }))
    throw DataError("fit_lw: need at least one speaker with two or more sessions");

  const Eigen::Index r = vectors.front().w.size();
  const Matrix x = stack_rows(vectors);
  const Vector mu = x.colwise().mean().transpose();
  Matrix scatter = Matrix::Zero(r, r);
  for (const auto& g : groups) {
    Vector m = Vector::Zero(r);
    for (const auto* v : g) m += v->w;
    m /= static_cast<double>(g.size());
    for (const auto* v : g) scatter.noalias() += (v->w - m) * (v->w - m).transpose();
  }
  const Matrix w = scatter / static_cast<double>(vectors.size());
  const Matrix total = (x.rowwise() - mu.transpose()).transpose() * (x.rowwise() - mu.transpose()) /
                       static_cast<double>(vectors.size());
  return LwTransform::from_covariance(mu, add_ridge(w, total, ridge));
}

/// L^-1 (v - mu) without the length normalization.
inline Vector lw_whiten(const Vector& v, const LwTransform& t) {
  if (v.size() != t.mu.size())
    throw DataError(detail::concat("apply_lw: dimension ", v.size(), " vs transform ", t.mu.size()));
  return t.w_chol.triangularView<Eigen::Lower>().solve(v - t.mu);
}

inline Vector length_normalize(const Vector& u) {
  const double norm = u.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) throw NumericalError("degenerate vector");
  return u / norm;
}

inline IVector length_normalize(IVector v) {
  v.w = length_normalize(v.w);
  return v;
}

inline IVector apply_lw(IVector v, const LwTransform& t) {
  v.w = length_normalize(lw_whiten(v.w, t));
  return v;
}

// ---------------------------------------------------------------------------
// IDVC: removal of the subspace spanned by per-subset means.

struct IdvcModel {
  Matrix basis;  // R x K, orthonormal columns
  Vector center;

  Eigen::Index rank() const { return basis.cols(); }
};

struct IdvcConfig {
  bool center = true;
  int max_rank = 0;  // 0: keep the full numerical rank
  double tolerance = 1e-8;
};

inline IdvcModel fit_idvc(const std::map<std::string, IVectorSet>& subsets,
                          const IdvcConfig& cfg = {}) {
  if (subsets.size() < 2) throw DataError("fit_idvc: need at least two subsets");
  Eigen::Index r = -1;
  Matrix means;
  Eigen::Index j = 0;
  double max_norm = 0.0;
  for (const auto& [name, vs] : subsets) {
    if (vs.empty()) throw DataError("fit_idvc: subset '" + name + "' is empty");
    check_dims(vs, "fit_idvc");
    if (r < 0) {
      r = vs.front().w.size();
      means.resize(r, static_cast<Eigen::Index>(subsets.size()));
    } else if (vs.front().w.size() != r) {
      throw DataError("fit_idvc: subsets have different dimensions");
    }
    means.col(j) = stack_rows(vs).colwise().mean().transpose();
    max_norm = std::max(max_norm, means.col(j).norm());
    ++j;
  }
  IdvcModel m;
  m.center = cfg.center ? Vector(means.rowwise().mean()) : Vector::Zero(r);
  const Matrix centered = means.colwise() - m.center;
  Eigen::JacobiSVD<Matrix> svd(centered, Eigen::ComputeThinU);
  const Vector& sv = svd.singularValues();
  const double threshold = cfg.tolerance * std::max(sv.size() ? sv(0) : 0.0, max_norm);
  Eigen::Index k = 0;
  while (k < sv.size() && sv(k) > threshold) ++k;
  if (cfg.max_rank > 0) k = std::min<Eigen::Index>(k, cfg.max_rank);
  m.basis = svd.matrixU().leftCols(k);
  return m;
}

inline Vector apply_idvc(const Vector& v, const IdvcModel& m) {
  if (v.size() != m.basis.rows() && m.basis.cols() > 0)
    throw DataError(detail::concat("apply_idvc: dimension ", v.size(), " vs basis ", m.basis.rows()));
  if (m.basis.cols() == 0) return v;
  return v - m.basis * (m.basis.transpose() * v);
}

inline IVector apply_idvc(IVector v, const IdvcModel& m) {
  v.w = apply_idvc(v.w, m);
  return v;
}

/// Orthonormal R x (R - K) basis of the complement of the removed subspace.
/// Coordinates in it keep everything the projection keeps but drop the K
/// null directions, so downstream covariances stay full rank.
inline Matrix idvc_complement(const IdvcModel& m) {
  const Eigen::Index r = m.basis.rows(), k = m.basis.cols();
  if (k == 0) return Matrix::Identity(r, r);
  Eigen::HouseholderQR<Matrix> qr(m.basis);
  const Matrix q = qr.householderQ() * Matrix::Identity(r, r);
  return q.rightCols(r - k);
}

/// Projection followed by the change to complement coordinates.
inline IVector apply_idvc_reduced(IVector v, const IdvcModel& m, const Matrix& complement) {
  v.w = complement.transpose() * apply_idvc(v.w, m);
  return v;
}

// ---------------------------------------------------------------------------
// Mean shifting toward unlabeled in-domain data.

struct MeanShift {
  Vector delta;
};

enum class Side { kEnroll, kTest };

inline MeanShift fit_mean_shift(const IVectorSet& dev) {
  check_dims(dev, "fit_mean_shift");
  return {stack_rows(dev).colwise().mean().transpose()};
}

/// Subtracts the development mean from test-side vectors; enrollment
/// vectors pass through unless shift_enroll is set.
inline IVector apply_mean_shift(IVector v, const MeanShift& m, Side side,
                                bool shift_enroll = false) {
  if (v.w.size() != m.delta.size())
    throw DataError(detail::concat("apply_mean_shift: dimension ", v.w.size(), " vs ", m.delta.size()));
  if (side == Side::kTest || shift_enroll) v.w -= m.delta;
  return v;
}

}  // namespace spkv
