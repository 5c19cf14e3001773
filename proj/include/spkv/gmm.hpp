// spkv/gmm.hpp

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

// Full-covariance GMM universal background models: EM training by binary
// splitting, frame posteriors, and the coupled PLP/MFCC ("two-feats") UBM
// pair with its posterior-combination rule.

#pragma once

#include <numeric>
#include <vector>

#include "spkv/common.hpp"
#include "spkv/frontend.hpp"

namespace spkv {

namespace detail {
inline const Matrix& frames_of(const Matrix& m) { return m; }
inline const Matrix& frames_of(const FeatureMatrix& f) { return f.data; }
}  // namespace detail

/// Immutable mixture of full-covariance Gaussians. Cholesky factors and
/// log-determinants are cached at construction.
class GmmModel {
 public:
  GmmModel() = default;

  GmmModel(Vector weights, Matrix means, std::vector<Matrix> covariances)
      : weights_(std::move(weights)), means_(std::move(means)), covs_(std::move(covariances)) {
    const Eigen::Index c = weights_.size();
    if (c < 1) throw DataError("GMM must have at least one component");
    if (means_.rows() != c || static_cast<Eigen::Index>(covs_.size()) != c)
      throw DataError("GMM component counts disagree");
    if ((weights_.array() < 0.0).any() || std::abs(weights_.sum() - 1.0) > 1e-10)
      throw DataError("GMM weights must lie on the simplex");
    const Eigen::Index d = means_.cols();
    chol_.reserve(c);
    logdet_.resize(c);
    for (Eigen::Index k = 0; k < c; ++k) {
      if (covs_[k].rows() != d || covs_[k].cols() != d)
        throw DataError("GMM covariance has wrong shape");
      covs_[k] = symmetrize(covs_[k]);
      auto llt = checked_llt(covs_[k], detail::concat("GMM covariance ", k));
      logdet_(k) = llt_logdet(llt);
      chol_.push_back(llt.matrixL());
    }
  }

  Eigen::Index num_components() const { return weights_.size(); }
  Eigen::Index dim() const { return means_.cols(); }
  const Vector& weights() const { return weights_; }
  const Matrix& means() const { return means_; }
  const std::vector<Matrix>& covariances() const { return covs_; }
  const Matrix& covariance(Eigen::Index c) const { return covs_[c]; }
  /// Lower Cholesky factor of covariance c.
  const Matrix& cholesky(Eigen::Index c) const { return chol_[c]; }
  double log_det(Eigen::Index c) const { return logdet_(c); }

  /// log(w_c) + log N(x_t; mu_c, Sigma_c) for every frame and component.
  Matrix log_joint(const Matrix& frames) const {
    if (frames.cols() != dim())
      throw DataError(detail::concat("GMM dimension ", dim(), " does not match frames of dimension ",
                                     frames.cols()));
    Matrix out(frames.rows(), num_components());
    for (Eigen::Index c = 0; c < num_components(); ++c) {
      Matrix centered = (frames.rowwise() - means_.row(c)).transpose();
      chol_[c].triangularView<Eigen::Lower>().solveInPlace(centered);
      const double lw = weights_(c) > 0.0 ? std::log(weights_(c))
                                          : -std::numeric_limits<double>::infinity();
      out.col(c) = (-0.5 * (centered.colwise().squaredNorm().array() +
                            dim() * kLog2Pi + logdet_(c)) + lw).matrix().transpose();
    }
    return out;
  }

 private:
  Vector weights_;
  Matrix means_;
  std::vector<Matrix> covs_;
  std::vector<Matrix> chol_;
  Vector logdet_;
};

/// Row-wise log-sum-exp.
inline Vector log_sum_exp_rows(const Matrix& m) {
  Vector out(m.rows());
  for (Eigen::Index t = 0; t < m.rows(); ++t) {
    const double mx = m.row(t).maxCoeff();
    if (!std::isfinite(mx)) {
      out(t) = mx;
      continue;
    }
    out(t) = mx + std::log((m.row(t).array() - mx).exp().sum());
  }
  return out;
}

/// Frame responsibilities (frames x components). Entries below
/// prune_threshold are zeroed and the row renormalized.
inline Matrix gmm_posteriors(const GmmModel& model, const Matrix& frames,
                             double prune_threshold = 1e-8) {
  Matrix lj = model.log_joint(frames);
  const Vector lse = log_sum_exp_rows(lj);
  Matrix post = (lj.colwise() - lse).array().exp().matrix();
  if (prune_threshold > 0.0) {
    post = (post.array() < prune_threshold).select(0.0, post);
    post.array().colwise() /= post.rowwise().sum().array();
  }
  return post;
}

inline Matrix gmm_posteriors(const GmmModel& model, const FeatureMatrix& frames,
                             double prune_threshold = 1e-8) {
  return gmm_posteriors(model, frames.data, prune_threshold);
}

/// Zeroth, first and second order EM accumulators. Addition is commutative
/// and associative, so per-utterance stats merge in any order.
struct GmmAccumulator {
  Vector occupancy;
  Matrix first;
  std::vector<Matrix> second;
  double log_likelihood = 0.0;
  double num_frames = 0.0;

  GmmAccumulator() = default;
  GmmAccumulator(Eigen::Index c, Eigen::Index d)
      : occupancy(Vector::Zero(c)), first(Matrix::Zero(c, d)), second(c, Matrix::Zero(d, d)) {}

  GmmAccumulator& operator+=(const GmmAccumulator& o) {
    occupancy += o.occupancy;
    first += o.first;
    for (std::size_t c = 0; c < second.size(); ++c) second[c] += o.second[c];
    log_likelihood += o.log_likelihood;
    num_frames += o.num_frames;
    return *this;
  }

  void add(const Matrix& post, const Matrix& frames) {
    occupancy += post.colwise().sum().transpose();
    first += post.transpose() * frames;
    for (Eigen::Index c = 0; c < post.cols(); ++c) {
      const Matrix weighted = frames.array().colwise() * post.col(c).array().sqrt();
      second[c].selfadjointView<Eigen::Lower>().rankUpdate(weighted.transpose());
    }
    num_frames += static_cast<double>(frames.rows());
  }
};

struct GmmTrainConfig {
  int components = 64;
  int iterations = 10;
  std::uint64_t seed = 0;
  bool diagonal = false;
  /// Eigenvalue floor as a fraction of the mean diagonal of the global covariance.
  double floor_factor = 1e-4;
  int split_iterations = 2;
  double split_perturbation = 0.1;
  /// Perturb along the leading eigenvector of the component covariance
  /// instead of along every axis with random signs.
  bool split_principal = true;
};

namespace detail {

struct GlobalMoments {
  Vector mean;
  Matrix cov;
  double count = 0.0;
};

template <typename Range>
GlobalMoments global_moments(const Range& utts) {
  GlobalMoments g;
  Vector sum;
  Matrix sq;
  for (const auto& u : utts) {
    const Matrix& x = frames_of(u);
    if (sum.size() == 0) {
      sum = Vector::Zero(x.cols());
      sq = Matrix::Zero(x.cols(), x.cols());
    }
    if (x.cols() != sum.size()) throw DataError("inconsistent feature dimensions across utterances");
    sum += x.colwise().sum().transpose();
    sq.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
    g.count += static_cast<double>(x.rows());
  }
  if (g.count == 0.0) throw DataError("no frames");
  g.mean = sum / g.count;
  g.cov = Matrix(sq.selfadjointView<Eigen::Lower>()) / g.count - g.mean * g.mean.transpose();
  g.cov = symmetrize(g.cov);
  return g;
}

inline double variance_floor(const Matrix& global_cov, double factor) {
  return factor * global_cov.diagonal().mean();
}

// M-step. Components whose occupancy is too small to estimate a covariance
// keep the fallback parameters with a tiny weight.
inline GmmModel m_step(const GmmAccumulator& acc, double floor, bool diagonal,
                       const Matrix& fallback_means, const std::vector<Matrix>& fallback_covs) {
  const Eigen::Index c_max = acc.occupancy.size();
  const Eigen::Index d = acc.first.cols();
  const double total = acc.occupancy.sum();
  constexpr double kMinWeight = 1e-10;
  Vector w(c_max);
  Matrix means(c_max, d);
  std::vector<Matrix> covs(c_max);
  for (Eigen::Index c = 0; c < c_max; ++c) {
    const double occ = acc.occupancy(c);
    if (occ <= 1e-6 * total || occ < 1e-3) {
      log_warning("GMM component ", c, " has occupancy ", occ, "; keeping previous parameters");
      w(c) = kMinWeight;
      means.row(c) = fallback_means.row(c);
      covs[c] = fallback_covs[c];
      continue;
    }
    w(c) = occ / total;
    const Vector mu = acc.first.row(c).transpose() / occ;
    Matrix cov = Matrix(acc.second[c].selfadjointView<Eigen::Lower>()) / occ - mu * mu.transpose();
    if (diagonal) cov = Matrix(cov.diagonal().asDiagonal());
    means.row(c) = mu.transpose();
    covs[c] = floor_eigenvalues(cov, floor);
  }
  w /= w.sum();
  return GmmModel(std::move(w), std::move(means), std::move(covs));
}

template <typename Range>
GmmAccumulator e_step(const GmmModel& model, const Range& utts) {
  GmmAccumulator acc(model.num_components(), model.dim());
  for (const auto& u : utts) {
    const Matrix& x = frames_of(u);
    const Matrix lj = model.log_joint(x);
    const Vector lse = log_sum_exp_rows(lj);
    const Matrix post = (lj.colwise() - lse).array().exp().matrix();
    acc.add(post, x);
    acc.log_likelihood += lse.sum();
  }
  return acc;
}

}  // namespace detail

/// Average per-frame log-likelihood of the data under the model.
template <typename Range>
double average_log_likelihood(const GmmModel& model, const Range& utts) {
  double ll = 0.0, n = 0.0;
  for (const auto& u : utts) {
    const Matrix& x = detail::frames_of(u);
    ll += log_sum_exp_rows(model.log_joint(x)).sum();
    n += static_cast<double>(x.rows());
  }
  return ll / n;
}

/// EM training of a full-covariance GMM. Initialization is the global
/// Gaussian, grown by binary splitting of the heaviest components
/// (mean +- perturbation * sigma, random sign per dimension) with
/// split_iterations EM passes per level. If ll_trace is given it receives the
/// average log-likelihood before each of the final iterations and after the
/// last one.
template <typename Range>
GmmModel train_gmm_em(const Range& utts, const GmmTrainConfig& cfg,
                      std::vector<double>* ll_trace = nullptr) {
  if (cfg.components < 1) throw UsageError("train_gmm_em: component count must be >= 1");
  const detail::GlobalMoments g = detail::global_moments(utts);
  const auto d = g.mean.size();
  const double needed = 10.0 * cfg.components * static_cast<double>(d);
  if (g.count < needed)
    throw DataError(detail::concat("insufficient data: ", g.count, " frames for ", cfg.components,
                                   " components of dimension ", d, " (need >= ", needed, ")"));
  const double floor = detail::variance_floor(g.cov, cfg.floor_factor);
  Rng rng(cfg.seed);

  Matrix g_cov = cfg.diagonal ? Matrix(g.cov.diagonal().asDiagonal()) : g.cov;
  GmmModel model(Vector::Ones(1), g.mean.transpose(), {floor_eigenvalues(g_cov, floor)});

  auto em_pass = [&](const GmmModel& m) {
    const auto acc = detail::e_step(m, utts);
    return std::make_pair(detail::m_step(acc, floor, cfg.diagonal, m.means(), m.covariances()),
                          acc.log_likelihood / acc.num_frames);
  };

  std::bernoulli_distribution coin(0.5);
  while (model.num_components() < cfg.components) {
    const Eigen::Index cur = model.num_components();
    const Eigen::Index nsplit = std::min<Eigen::Index>(cur, cfg.components - cur);
    std::vector<Eigen::Index> order(cur);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
      return model.weights()(a) > model.weights()(b);
    });
    Vector w(cur + nsplit);
    Matrix means(cur + nsplit, d);
    std::vector<Matrix> covs(model.covariances());
    w.head(cur) = model.weights();
    means.topRows(cur) = model.means();
    for (Eigen::Index i = 0; i < nsplit; ++i) {
      const Eigen::Index src = order[i], dst = cur + i;
      Vector offset;
      if (cfg.split_principal) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(model.covariance(src));
        offset = cfg.split_perturbation * std::sqrt(es.eigenvalues()(d - 1)) * es.eigenvectors().col(d - 1);
        if (coin(rng)) offset = -offset;
      } else {
        offset = cfg.split_perturbation * model.covariance(src).diagonal().cwiseSqrt();
        for (Eigen::Index k = 0; k < d; ++k)
          if (coin(rng)) offset(k) = -offset(k);
      }
      means.row(dst) = model.means().row(src) + offset.transpose();
      means.row(src) = model.means().row(src) - offset.transpose();
      w(src) *= 0.5;
      w(dst) = w(src);
      covs.push_back(model.covariance(src));
    }
    model = GmmModel(w / w.sum(), std::move(means), std::move(covs));
    for (int it = 0; it < cfg.split_iterations; ++it) model = em_pass(model).first;
  }

  if (ll_trace) ll_trace->clear();
  for (int it = 0; it < cfg.iterations; ++it) {
    auto [next, ll] = em_pass(model);
    if (ll_trace) ll_trace->push_back(ll);
    model = std::move(next);
  }
  if (ll_trace) ll_trace->push_back(average_log_likelihood(model, utts));
  return model;
}

/// One M-step from externally supplied per-utterance responsibilities.
/// Used for the coupled MFCC-UBM and for posterior sources with no GMM of
/// their own.
template <typename FrameRange>
GmmModel gmm_from_posteriors(const std::vector<Matrix>& posteriors, const FrameRange& frames,
                             double floor_factor = 1e-4, bool diagonal = false) {
  if (posteriors.size() != static_cast<std::size_t>(std::distance(std::begin(frames), std::end(frames))))
    throw DataError("gmm_from_posteriors: utterance counts differ");
  if (posteriors.empty()) throw DataError("gmm_from_posteriors: no utterances");
  const detail::GlobalMoments g = detail::global_moments(frames);
  const Eigen::Index c = posteriors.front().cols();
  GmmAccumulator acc(c, g.mean.size());
  std::size_t i = 0;
  for (const auto& u : frames) {
    const Matrix& x = detail::frames_of(u);
    if (posteriors[i].rows() != x.rows())
      throw DataError(detail::concat("utterance ", i, ": ", posteriors[i].rows(),
                                     " posterior frames vs ", x.rows(), " feature frames"));
    if (posteriors[i].cols() != c) throw DataError("posterior component counts differ");
    acc.add(posteriors[i], x);
    ++i;
  }
  const Matrix fallback_means = g.mean.transpose().replicate(c, 1);
  const std::vector<Matrix> fallback_covs(c, floor_eigenvalues(g.cov, detail::variance_floor(g.cov, floor_factor)));
  return detail::m_step(acc, detail::variance_floor(g.cov, floor_factor), diagonal, fallback_means,
                        fallback_covs);
}

struct CoupledUbm {
  GmmModel plp_ubm;
  GmmModel mfcc_ubm;
};

/// Builds the MFCC-UBM of the coupled pair by a single M-step on MFCC frames
/// weighted by the PLP-UBM responsibilities. Component c of one model
/// corresponds to component c of the other.
template <typename Range>
CoupledUbm couple_ubm(const GmmModel& plp_ubm, const Range& mfcc_frames, const Range& plp_frames,
                      double floor_factor = 1e-4) {
  const auto n_mfcc = std::distance(std::begin(mfcc_frames), std::end(mfcc_frames));
  const auto n_plp = std::distance(std::begin(plp_frames), std::end(plp_frames));
  if (n_mfcc != n_plp)
    throw DataError(detail::concat("couple_ubm: ", n_mfcc, " MFCC utterances vs ", n_plp, " PLP"));
  std::vector<Matrix> post;
  post.reserve(static_cast<std::size_t>(n_plp));
  auto mit = std::begin(mfcc_frames);
  std::size_t i = 0;
  for (const auto& p : plp_frames) {
    const Matrix& xp = detail::frames_of(p);
    const Matrix& xm = detail::frames_of(*mit++);
    if (xp.rows() != xm.rows())
      throw DataError(detail::concat("couple_ubm: utterance ", i, " has ", xp.rows(),
                                     " PLP frames but ", xm.rows(), " MFCC frames"));
    post.push_back(gmm_posteriors(plp_ubm, xp, 0.0));
    ++i;
  }
  return {plp_ubm, gmm_from_posteriors(post, mfcc_frames, floor_factor)};
}

/// Per-frame product of two posterior streams, renormalized. Rows whose
/// product underflows fall back to uniform.
inline Matrix combine_posteriors(const Matrix& p_plp, const Matrix& p_mfcc) {
  if (p_plp.rows() != p_mfcc.rows() || p_plp.cols() != p_mfcc.cols())
    throw DataError(detail::concat("combine_posteriors: shapes ", p_plp.rows(), "x", p_plp.cols(),
                                   " and ", p_mfcc.rows(), "x", p_mfcc.cols(), " differ"));
  Matrix out = p_plp.cwiseProduct(p_mfcc);
  for (Eigen::Index t = 0; t < out.rows(); ++t) {
    const double s = out.row(t).sum();
    if (s > 0.0 && std::isfinite(s))
      out.row(t) /= s;
    else
      out.row(t).setConstant(1.0 / static_cast<double>(out.cols()));
  }
  return out;
}

/// Posteriors of the coupled pair for aligned PLP/MFCC frames of one utterance.
inline Matrix two_feats_posteriors(const CoupledUbm& ubm, const Matrix& plp, const Matrix& mfcc,
                                   double prune_threshold = 1e-8) {
  if (plp.rows() != mfcc.rows()) throw DataError("two-feats: PLP and MFCC frame counts differ");
  Matrix p = combine_posteriors(gmm_posteriors(ubm.plp_ubm, plp, 0.0),
                                gmm_posteriors(ubm.mfcc_ubm, mfcc, 0.0));
  if (prune_threshold > 0.0) {
    p = (p.array() < prune_threshold).select(0.0, p);
    p.array().colwise() /= p.rowwise().sum().array();
  }
  return p;
}

}  // namespace spkv
