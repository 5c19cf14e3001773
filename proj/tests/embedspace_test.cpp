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

#include <gtest/gtest.h>
#include <gtest/gtest.h>

#include "spkv/embedspace.hpp"
#include "spkv/synthkit.hpp"

namespace spkv {
namespace {

IVector vec(std::initializer_list<double> xs, std::string spk = {}, std::string part = {}) {
  IVector v;
  v.w = Vector(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v.w(i++) = x;
  v.speaker = std::move(spk);
  v.partition = std::move(part);
  return v;
}

TEST(FitLw, TwoSpeakersSymmetricSessions) {
  const Vector d = (Vector(2) << 0.5, -1.0).finished();
  const Vector m1 = (Vector(2) << 1.0, 2.0).finished(), m2 = (Vector(2) << -3.0, 0.0).finished();
  IVectorSet vs;
  for (const auto& [m, s] : {std::pair{m1, "a"}, std::pair{m2, "b"}}) {
    IVector p, q;
    p.w = m + d;
    q.w = m - d;
    p.speaker = q.speaker = s;
    vs.push_back(p);
    vs.push_back(q);
  }
  const auto t = fit_lw(vs);
  // 4 d d' / 4 sessions, plus the ridge 1e-6 * trace / R
  const Matrix expected = d * d.transpose() + 1e-6 * d.squaredNorm() / 2.0 * Matrix::Identity(2, 2);
  EXPECT_LT((t.w - expected).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((t.mu - (m1 + m2) / 2).norm(), 1e-15);
}

TEST(FitLw, SessionsAtSpeakerMeanGiveRidgeOnly) {
  IVectorSet vs{vec({0, 0}, "a"), vec({0, 0}, "a"), vec({2, 2}, "b")};
  const auto t = fit_lw(vs);
  EXPECT_LT((t.mu - Vector::Constant(2, 2.0 / 3.0)).norm(), 1e-15);
  // fallback scale: trace of the total covariance
  EXPECT_TRUE(t.w.isDiagonal(0.0));
  EXPECT_GT(t.w(0, 0), 0.0);
  EXPECT_LT(t.w(0, 0), 1e-5);
}

TEST(FitLw, GlobalMean) {
  IVectorSet vs{vec({0, 0}, "a"), vec({0.5, 0}, "a"), vec({2, 2}, "b"), vec({1.5, 2}, "b")};
  EXPECT_LT((fit_lw(vs).mu - Vector::Constant(2, 1.0)).norm(), 1e-15);
}

TEST(FitLw, Preconditions) {
  EXPECT_THROW(fit_lw({vec({0, 0}, "a"), vec({1, 0}, "a")}), DataError);
  EXPECT_THROW(fit_lw({vec({0, 0}, "a"), vec({1, 0}, "b")}), DataError);
  EXPECT_THROW(fit_lw({vec({0, 0}, "a"), vec({1, 0})}), DataError);
}

TEST(ApplyLw, HandCases) {
  auto t = LwTransform::from_covariance(Vector::Zero(2), Matrix::Identity(2, 2));
  const auto a = apply_lw(vec({3, 4}), t);
  EXPECT_NEAR(a.w(0), 0.6, 1e-15);
  EXPECT_NEAR(a.w(1), 0.8, 1e-15);
  t = LwTransform::from_covariance(Vector::Zero(2), (Vector(2) << 4, 1).finished().asDiagonal());
  const auto b = apply_lw(vec({2, 1}), t);
  EXPECT_NEAR(b.w(0), std::sqrt(0.5), 1e-15);
  EXPECT_NEAR(b.w(1), std::sqrt(0.5), 1e-15);
  EXPECT_THROW(apply_lw(vec({0, 0}), t), NumericalError);
  EXPECT_THROW(apply_lw(vec({1, 2, 3}), t), DataError);
}

TEST(ApplyLw, SingularCovarianceSuggestsRidge) {
  try {
    LwTransform::from_covariance(Vector::Zero(2), Matrix::Zero(2, 2));
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("ridge"), std::string::npos);
  }
}

TEST(ApplyLw, WhitensTrainingData) {
  SynthSpec spec;
  spec.seed = 3;
  spec.speakers = 200;
  spec.sessions_per_speaker = 6;
  spec.b_true = (Vector(4) << 3, 2, 1, 0.5).finished();
  spec.w_true = (Vector(4) << 0.5, 1, 2, 0.1).finished();
  const auto vs = gen_plda_vectors(spec);
  const auto t = fit_lw(vs);
  IVectorSet white;
  for (const auto& v : vs) {
    IVector u = v;
    u.w = lw_whiten(v.w, t);
    white.push_back(u);
    EXPECT_NEAR(apply_lw(v, t).w.norm(), 1.0, 1e-12);
  }
  // pooled within-speaker covariance of the whitened vectors
  const auto groups = group_by_speaker(white);
  Matrix within = Matrix::Zero(4, 4);
  for (const auto& g : groups) {
    Vector m = Vector::Zero(4);
    for (const auto* v : g) m += v->w;
    m /= static_cast<double>(g.size());
    for (const auto* v : g) within += (v->w - m) * (v->w - m).transpose();
  }
  within /= static_cast<double>(white.size());
  EXPECT_LT((within - Matrix::Identity(4, 4)).norm(), 0.05 * 2.0);
}

TEST(Idvc, TwoSubsetMeans) {
  std::map<std::string, IVectorSet> subsets{{"a", {vec({1, 0})}}, {"b", {vec({-1, 0})}}};
  const auto m = fit_idvc(subsets);
  ASSERT_EQ(m.rank(), 1);
  EXPECT_LT(m.center.norm(), 1e-12);
  EXPECT_NEAR(std::abs(m.basis(0, 0)), 1.0, 1e-12);
  EXPECT_NEAR(m.basis(1, 0), 0.0, 1e-12);
  const auto p = apply_idvc(vec({3, 5}), m);
  EXPECT_NEAR(p.w(0), 0.0, 1e-12);
  EXPECT_NEAR(p.w(1), 5.0, 1e-12);
  const auto q = apply_idvc(vec({0, 7}), m);
  EXPECT_LT((q.w - vec({0, 7}).w).norm(), 1e-14);
}

TEST(Idvc, EqualMeansGiveEmptyBasis) {
  std::map<std::string, IVectorSet> subsets{{"a", {vec({1, 2}), vec({3, 4})}}, {"b", {vec({2, 3})}}};
  const auto m = fit_idvc(subsets);
  EXPECT_EQ(m.rank(), 0);
  EXPECT_EQ(apply_idvc(vec({7, -1}), m).w, vec({7, -1}).w);
}

TEST(Idvc, CollinearMeansGiveRankOne) {
  std::map<std::string, IVectorSet> subsets{
      {"a", {vec({1, 1, 0})}}, {"b", {vec({2, 2, 0})}}, {"c", {vec({4, 4, 0})}}};
  EXPECT_EQ(fit_idvc(subsets).rank(), 1);
}

TEST(Idvc, UncenteredKeepsGlobalDirection) {
  std::map<std::string, IVectorSet> subsets{{"a", {vec({1, 1})}}, {"b", {vec({3, 3})}}};
  IdvcConfig cfg;
  cfg.center = false;
  EXPECT_EQ(fit_idvc(subsets, cfg).rank(), 1);
  subsets["c"] = {vec({3, -1})};
  EXPECT_EQ(fit_idvc(subsets, cfg).rank(), 2);
  cfg.max_rank = 1;
  EXPECT_EQ(fit_idvc(subsets, cfg).rank(), 1);
}

TEST(Idvc, Preconditions) {
  EXPECT_THROW(fit_idvc({{"a", {vec({1})}}}), DataError);
  EXPECT_THROW(fit_idvc({{"a", {vec({1})}}, {"b", {}}}), DataError);
}

TEST(Idvc, ProjectionProperties) {
  Rng rng(5);
  std::map<std::string, IVectorSet> subsets;
  for (int s = 0; s < 6; ++s) {
    const Vector shift = 3.0 * random_normal(20, 1, rng);
    IVectorSet vs;
    for (int k = 0; k < 30; ++k) {
      IVector v;
      v.w = shift + random_normal(20, 1, rng);
      vs.push_back(v);
    }
    subsets["s" + std::to_string(s)] = vs;
  }
  const auto m = fit_idvc(subsets);
  EXPECT_EQ(m.rank(), 5);
  EXPECT_LT((m.basis.transpose() * m.basis - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-10);
  for (const auto& [name, vs] : subsets) {
    Vector mean = Vector::Zero(20);
    for (const auto& v : vs) {
      const Vector once = apply_idvc(v.w, m);
      EXPECT_LT((apply_idvc(once, m) - once).cwiseAbs().maxCoeff(), 1e-12);
      mean += once;
    }
    mean /= static_cast<double>(vs.size());
    EXPECT_LT((m.basis.transpose() * mean).norm(), 1e-8) << name;
  }
}

TEST(MeanShift, TestSideOnly) {
  const auto ms = fit_mean_shift({vec({2, 0}), vec({0, 2})});
  EXPECT_EQ(ms.delta, vec({1, 1}).w);
  EXPECT_EQ(apply_mean_shift(vec({1, 1}), ms, Side::kTest).w, Vector::Zero(2));
  EXPECT_EQ(apply_mean_shift(vec({1, 1}), ms, Side::kEnroll).w, vec({1, 1}).w);
  EXPECT_EQ(apply_mean_shift(vec({1, 1}), ms, Side::kEnroll, true).w, Vector::Zero(2));
  const MeanShift zero{Vector::Zero(2)};
  EXPECT_EQ(apply_mean_shift(vec({4, 5}), zero, Side::kTest).w, vec({4, 5}).w);
  EXPECT_THROW(fit_mean_shift({}), DataError);
}

}  // namespace
}  // namespace spkv
