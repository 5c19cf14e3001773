// spkv/ivector.hpp

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

// Baum-Welch statistics, total-variability training and i-vector
// extraction.
//
// The generative model is x_t ~ N(mu_c + T_c w, Sigma_c) for frames aligned
// to component c, with w ~ N(0, I). For one utterance with zeroth-order
// counts n_c and centred first-order sums f~_c = f_c - n_c mu_c, the
// posterior of w is Gaussian with precision
//   L = I + sum_c n_c T_c' Sigma_c^-1 T_c
// and mean L^-1 sum_c T_c' Sigma_c^-1 f~_c.

#pragma once

#include <string>
#include <vector>

#include "spkv/common.hpp"
#include "spkv/gmm.hpp"

namespace spkv {

struct SufficientStats {
  Vector n;  // zeroth order, one entry per component
  Matrix f;  // first order, components x feature dim
  std::string utterance_id;

  Eigen::Index num_components() const { return n.size(); }
  Eigen::Index dim() const { return f.cols(); }

  SufficientStats& operator+=(const SufficientStats& o) {
    if (o.n.size() != n.size() || o.f.cols() != f.cols())
      throw DataError("cannot merge statistics of different shapes");
    n += o.n;
    f += o.f;
    return *this;
  }
};

inline SufficientStats accumulate_stats(const Matrix& posteriors, const Matrix& frames,
                                        std::string utterance_id = {}) {
  if (posteriors.rows() != frames.rows())
    throw DataError(detail::concat("accumulate_stats: ", posteriors.rows(), " posterior rows vs ",
                                   frames.rows(), " frames"));
  SufficientStats s;
  s.n = posteriors.colwise().sum().transpose();
  s.f = posteriors.transpose() * frames;
  s.utterance_id = std::move(utterance_id);
  return s;
}

struct TvConfig {
  int rank = 50;
  int iterations = 10;
  std::uint64_t seed = 0;
  bool diagonal = false;  // use only the diagonal of each UBM covariance
  double init_scale = 0.1;
};

/// UBM plus the low-rank matrix T ((C*D) x R, block T_c in rows c*D..).
class TotalVariabilityModel {
 public:
  TotalVariabilityModel() = default;

  TotalVariabilityModel(GmmModel ubm, Matrix t, bool diagonal = false)
      : ubm_(std::move(ubm)), t_(std::move(t)), diagonal_(diagonal) {
    const Eigen::Index c = ubm_.num_components(), d = ubm_.dim();
    if (t_.rows() != c * d)
      throw DataError(detail::concat("T has ", t_.rows(), " rows, expected C*D = ", c * d));
    if (t_.cols() < 1 || t_.cols() > c * d) throw DataError("i-vector rank out of range");
    if (!t_.allFinite()) throw NumericalError("T has non-finite entries");
    precompute();
  }

  const GmmModel& ubm() const { return ubm_; }
  const Matrix& t() const { return t_; }
  bool diagonal() const { return diagonal_; }
  Eigen::Index rank() const { return t_.cols(); }
  auto block(Eigen::Index c) const { return t_.middleRows(c * ubm_.dim(), ubm_.dim()); }

  Matrix centered_first_order(const SufficientStats& s) const {
    check(s);
    return s.f - s.n.asDiagonal() * ubm_.means();
  }

  struct Posterior {
    Vector mean;
    Eigen::LLT<Matrix> precision;
    Vector linear;  // sum_c T_c' Sigma_c^-1 f~_c
  };

  Posterior posterior(const SufficientStats& s) const {
    const Matrix ft = centered_first_order(s);
    const Eigen::Index r = rank();
    Matrix prec = Matrix::Identity(r, r);
    Vector lin = Vector::Zero(r);
    for (Eigen::Index c = 0; c < ubm_.num_components(); ++c) {
      if (s.n(c) != 0.0) prec.noalias() += s.n(c) * tt_[c];
      lin.noalias() += sinv_t_[c].transpose() * ft.row(c).transpose();
    }
    Posterior p{Vector(), Eigen::LLT<Matrix>(prec), std::move(lin)};
    if (p.precision.info() != Eigen::Success)
      throw NumericalError("i-vector posterior precision is not positive definite");
    p.mean = p.precision.solve(p.linear);
    return p;
  }

 private:
  void check(const SufficientStats& s) const {
    if (s.n.size() != ubm_.num_components() || s.f.rows() != ubm_.num_components() ||
        s.f.cols() != ubm_.dim())
      throw DataError(detail::concat("statistics of shape ", s.f.rows(), "x", s.f.cols(),
                                     " do not match model ", ubm_.num_components(), "x", ubm_.dim()));
  }

  void precompute() {
    const Eigen::Index c_max = ubm_.num_components();
    sinv_t_.resize(c_max);
    tt_.resize(c_max);
    for (Eigen::Index c = 0; c < c_max; ++c) {
      const Matrix tc = block(c);
      if (diagonal_) {
        sinv_t_[c] = ubm_.covariance(c).diagonal().cwiseInverse().asDiagonal() * tc;
      } else {
        sinv_t_[c] = tc;
        const Matrix& l = ubm_.cholesky(c);
        l.triangularView<Eigen::Lower>().solveInPlace(sinv_t_[c]);
        l.transpose().triangularView<Eigen::Upper>().solveInPlace(sinv_t_[c]);
      }
      tt_[c] = symmetrize(tc.transpose() * sinv_t_[c]);
    }
  }

  GmmModel ubm_;
  Matrix t_;
  bool diagonal_ = false;
  std::vector<Matrix> sinv_t_;  // Sigma_c^-1 T_c
  std::vector<Matrix> tt_;      // T_c' Sigma_c^-1 T_c
};

inline IVector extract_ivector(const SufficientStats& stats, const TotalVariabilityModel& model) {
  IVector iv;
  iv.w = model.posterior(stats).mean;
  iv.utterance_id = stats.utterance_id;
  return iv;
}

namespace detail {

struct TvAccumulator {
  std::vector<Matrix> nww;  // sum_u n_c E[ww']
  std::vector<Matrix> fw;   // sum_u f~_c E[w]'
  double objective = 0.0;

  TvAccumulator(Eigen::Index c, Eigen::Index d, Eigen::Index r)
      : nww(c, Matrix::Zero(r, r)), fw(c, Matrix::Zero(d, r)) {}
};

inline TvAccumulator tv_e_step(const TotalVariabilityModel& model,
                               const std::vector<SufficientStats>& stats) {
  const Eigen::Index c_max = model.ubm().num_components();
  const Eigen::Index r = model.rank();
  TvAccumulator acc(c_max, model.ubm().dim(), r);
  for (const auto& s : stats) {
    const auto p = model.posterior(s);
    const Matrix ft = model.centered_first_order(s);
    const Matrix eww = p.precision.solve(Matrix::Identity(r, r)) + p.mean * p.mean.transpose();
    for (Eigen::Index c = 0; c < c_max; ++c) {
      if (s.n(c) != 0.0) acc.nww[c].noalias() += s.n(c) * eww;
      acc.fw[c].noalias() += ft.row(c).transpose() * p.mean.transpose();
    }
    // Marginal log-likelihood of the first-order stats, up to a T-independent
    // constant.
    acc.objective += 0.5 * p.linear.dot(p.mean) - 0.5 * llt_logdet(p.precision);
  }
  return acc;
}

}  // namespace detail

/// Per-utterance average of the EM objective for the current model.
inline double tv_objective(const TotalVariabilityModel& model,
                           const std::vector<SufficientStats>& stats) {
  return detail::tv_e_step(model, stats).objective / static_cast<double>(stats.size());
}

/// One EM iteration on T. The E-step objective of the incoming model is
/// written to *objective if given.
inline TotalVariabilityModel tv_em_step(const TotalVariabilityModel& model,
                                        const std::vector<SufficientStats>& stats,
                                        int iteration = 0, double* objective = nullptr) {
  const GmmModel& ubm = model.ubm();
  const Eigen::Index c_max = ubm.num_components(), d = ubm.dim(), r = model.rank();
  const auto acc = detail::tv_e_step(model, stats);
  if (objective) *objective = acc.objective / static_cast<double>(stats.size());
  Matrix t_new(c_max * d, r);
  double cross_norm = 0.0;
  for (Eigen::Index c = 0; c < c_max; ++c) {
    Eigen::LLT<Matrix> llt(symmetrize(acc.nww[c]));
    if (llt.info() != Eigen::Success || acc.nww[c].trace() <= 0.0)
      throw NumericalError(detail::concat("train_tv_em iteration ", iteration,
                                          ": singular M-step Gram matrix for component ", c));
    t_new.middleRows(c * d, d) = llt.solve(acc.fw[c].transpose()).transpose();
    cross_norm += acc.fw[c].squaredNorm();
  }
  if (cross_norm == 0.0)
    throw NumericalError(detail::concat("train_tv_em iteration ", iteration,
                                        ": degenerate T update (all centred first-order "
                                        "statistics are zero)"));
  return TotalVariabilityModel(ubm, std::move(t_new), model.diagonal());
}

/// EM estimation of T from a random (seeded) start. If objective_trace is
/// given it receives the per-utterance objective before each M-step and
/// after the last one.
inline TotalVariabilityModel train_tv_em(const std::vector<SufficientStats>& stats,
                                         const GmmModel& ubm, const TvConfig& cfg,
                                         std::vector<double>* objective_trace = nullptr) {
  const Eigen::Index c_max = ubm.num_components(), d = ubm.dim();
  if (cfg.rank < 1) throw UsageError("train_tv_em: rank must be >= 1");
  if (static_cast<Eigen::Index>(stats.size()) < cfg.rank)
    throw DataError(detail::concat("train_tv_em: ", stats.size(), " utterances for rank ", cfg.rank));

  Rng rng(cfg.seed);
  Matrix t(c_max * d, cfg.rank);
  for (Eigen::Index c = 0; c < c_max; ++c)
    t.middleRows(c * d, d) = cfg.init_scale * ubm.cholesky(c) * random_normal(d, cfg.rank, rng);
  TotalVariabilityModel model(ubm, std::move(t), cfg.diagonal);

  if (objective_trace) objective_trace->clear();
  for (int it = 0; it < cfg.iterations; ++it) {
    double obj = 0.0;
    model = tv_em_step(model, stats, it, &obj);
    if (objective_trace) objective_trace->push_back(obj);
  }
  if (objective_trace) objective_trace->push_back(tv_objective(model, stats));
  return model;
}

}  // namespace spkv
