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

#include "spkv/plda.hpp"
#include "spkv/synthkit.hpp"

namespace spkv {
namespace {

IVector v1(double x, std::string spk) {
  IVector v;
  v.w = Vector::Constant(1, x);
  v.speaker = std::move(spk);
  return v;
}

PldaStats hand_stats(std::vector<std::pair<double, int>> speakers) {
  PldaStats st;
  st.within_scatter = Matrix::Zero(1, 1);
  st.m_all = Vector::Zero(1);
  for (auto [mean, n] : speakers) {
    st.speakers.push_back({"s", n, Vector::Constant(1, mean)});
    st.num_sessions += n;
  }
  return st;
}

PldaModel unit_model() { return {Vector::Zero(1), Matrix::Ones(1, 1), Matrix::Ones(1, 1)}; }

Matrix random_spd(Eigen::Index r, Rng& rng, double jitter) {
  Matrix a = random_normal(r, r, rng);
  return a * a.transpose() / static_cast<double>(r) + jitter * Matrix::Identity(r, r);
}

TEST(InitPlda, TwoSpeakerHandScatter) {
  IVectorSet vs{v1(0, "a"), v1(2, "a"), v1(-2, "b"), v1(0, "b")};
  const auto m = init_plda(vs);
  EXPECT_NEAR(m.m_all(0), 0.0, 1e-15);
  EXPECT_NEAR(m.b(0, 0), 1.0, 1e-5);
  EXPECT_NEAR(m.w(0, 0), 1.0, 1e-5);
}

TEST(InitPlda, MeanOfSpeakerMeans) {
  IVectorSet vs{v1(2, "a"), v1(4, "b"), v1(4, "b"), v1(4, "b")};
  EXPECT_DOUBLE_EQ(init_plda(vs).m_all(0), 3.0);
}

TEST(InitPlda, SingleSessionSpeakersWarn) {
  std::string captured;
  log_sink() = [&](std::string_view level, std::string_view msg) {
    captured += std::string(level) + ": " + std::string(msg);
  };
  const auto m = init_plda(IVectorSet{v1(1, "a"), v1(-1, "b"), v1(3, "c")});
  log_sink() = nullptr;
  EXPECT_NE(captured.find("ERROR: "), std::string::npos);
  EXPECT_NE(captured.find("single session"), std::string::npos);
  EXPECT_GT(m.w(0, 0), 0.0);
  EXPECT_LT(m.w(0, 0), 1e-5);
}

TEST(InitPlda, NeedsTwoSpeakers) {
  EXPECT_THROW(init_plda(IVectorSet{v1(1, "a"), v1(2, "a")}), DataError);
}

TEST(PldaEm, OneSpeakerHandUpdate) {
  const auto out = plda_em_step(hand_stats({{0.0, 1}}), unit_model());
  EXPECT_NEAR(out.b(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(out.w(0, 0), 0.5, 1e-15);
}

TEST(PldaEm, TwoSpeakerHandUpdate) {
  const auto out = plda_em_step(hand_stats({{1.0, 4}, {-1.0, 4}}), unit_model());
  EXPECT_NEAR(out.b(0, 0), 0.84, 1e-12);
  EXPECT_NEAR(out.w(0, 0), 0.24, 1e-12);
}

TEST(PldaEm, WithinScatterEntersW) {
  auto st = hand_stats({{1.0, 4}, {-1.0, 4}});
  st.within_scatter(0, 0) = 8.0;  // every session one unit from its speaker mean
  EXPECT_NEAR(plda_em_step(st, unit_model()).w(0, 0), 0.24 + 1.0, 1e-12);
}

TEST(PldaEm, RecoversGeneratingCovariances) {
  SynthSpec spec;
  spec.seed = 21;
  spec.speakers = 500;
  spec.sessions_per_speaker = 10;
  spec.b_true = (Vector(2) << 2.0, 1.0).finished();
  spec.w_true = (Vector(2) << 1.0, 0.5).finished();
  const auto m = train_plda(gen_plda_vectors(spec), 10);
  const Matrix b = spec.b_true.asDiagonal(), w = spec.w_true.asDiagonal();
  EXPECT_LT((m.b - b).norm() / b.norm(), 0.10);
  EXPECT_LT((m.w - w).norm() / w.norm(), 0.10);
}

TEST(PldaEm, StaysSymmetricPositiveDefinite) {
  SynthSpec spec;
  spec.seed = 22;
  spec.speakers = 40;
  spec.sessions_per_speaker = 3;
  spec.b_true = Vector::LinSpaced(6, 0.1, 3.0);
  spec.w_true = Vector::LinSpaced(6, 2.0, 0.2);
  const auto st = compute_plda_stats(gen_plda_vectors(spec));
  auto m = init_plda(st);
  for (int it = 0; it < 20; ++it) {
    m = plda_em_step(st, m, it);
    EXPECT_LT((m.b - m.b.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((m.w - m.w.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix>(m.b).eigenvalues().minCoeff(), -1e-12);
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<Matrix>(m.w).eigenvalues().minCoeff(), 0.0);
  }
}

TEST(PldaEm, NonSpdInputReportsIteration) {
  PldaModel bad = unit_model();
  bad.w(0, 0) = -1.0;
  try {
    plda_em_step(hand_stats({{1.0, 2}, {-1.0, 2}}), bad, 7);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("iteration 7"), std::string::npos);
  }
}

TEST(PostNorm, ScaledIdentity) {
  const auto t = postnorm_fit({Vector::Zero(3), 2.0 * Matrix::Identity(3, 3), Matrix::Identity(3, 3)});
  EXPECT_LT((t.psi - Vector::Constant(3, 2.0)).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((t.a * t.a.transpose() - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(PostNorm, EqualCovariancesGiveUnitPsi) {
  const Matrix d = (Vector(2) << 4, 1).finished().asDiagonal();
  const auto t = postnorm_fit({Vector::Zero(2), d, d});
  EXPECT_LT((t.psi - Vector::Ones(2)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(PostNorm, DiagonalizesRandomPairs) {
  Rng rng(23);
  for (int k = 0; k < 20; ++k) {
    const Eigen::Index r = 1 + k * 2;
    const Matrix b = random_spd(r, rng, 0.01), w = random_spd(r, rng, 0.1);
    const auto t = postnorm_fit({Vector::Zero(r), b, w});
    const Matrix awa = t.a * w * t.a.transpose();
    const Matrix aba = t.a * b * t.a.transpose();
    EXPECT_LT((awa - Matrix::Identity(r, r)).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((aba - Matrix(aba.diagonal().asDiagonal())).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((aba.diagonal() - t.psi).cwiseAbs().maxCoeff(), 1e-8);
    for (Eigen::Index i = 1; i < r; ++i) EXPECT_GE(t.psi(i - 1), t.psi(i));
  }
}

TEST(PostNorm, ApplyHandCaseAndUnitNorm) {
  PostNormTransform t;
  t.a = Matrix::Identity(2, 2);
  t.psi = Vector::Ones(2);
  t.mean = Vector::Zero(2);
  const Vector u = postnorm_apply((Vector(2) << 3, 4).finished(), t, t.mean);
  EXPECT_NEAR(u(0), 0.6, 1e-15);
  EXPECT_NEAR(u(1), 0.8, 1e-15);
  EXPECT_THROW(postnorm_apply(Vector::Zero(2), t, t.mean), NumericalError);
  Rng rng(24);
  for (int k = 0; k < 10; ++k) {
    const Matrix b = random_spd(5, rng, 0.1), w = random_spd(5, rng, 0.1);
    const auto t5 = postnorm_fit({random_normal(5, 1, rng), b, w});
    EXPECT_NEAR(postnorm_apply(Vector(random_normal(5, 1, rng)), t5, t5.mean).norm(), 1.0, 1e-12);
  }
}

TEST(PostNorm, ComposesWithLwAsOneAffineMap) {
  Rng rng(25);
  const Eigen::Index r = 6;
  const auto lw = LwTransform::from_covariance(random_normal(r, 1, rng), random_spd(r, rng, 0.2));
  const auto t = postnorm_fit({random_normal(r, 1, rng), random_spd(r, rng, 0.1), random_spd(r, rng, 0.1)});
  // Fused map: A L^-1 v - (A L^-1 mu + A m_all)
  const Matrix l_inv = lw.w_chol.triangularView<Eigen::Lower>().solve(Matrix::Identity(r, r));
  const Matrix fused = t.a * l_inv;
  const Vector offset = fused * lw.mu + t.a * t.mean;
  for (int k = 0; k < 10; ++k) {
    const Vector v = random_normal(r, 1, rng);
    const Vector staged = postnorm_apply(lw_whiten(v, lw), t, t.mean);
    const Vector direct = length_normalize(Vector(fused * v - offset));
    EXPECT_LT((staged - direct).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Truncate, ZeroesTrailingPsi) {
  PostNormTransform t;
  t.a = Matrix::Identity(3, 3);
  t.psi = (Vector(3) << 3, 2, 1).finished();
  t.mean = Vector::Zero(3);
  t.rank = 3;
  EXPECT_EQ(truncate_eigenvoices(t, 2).psi, (Vector(3) << 3, 2, 0).finished());
  EXPECT_EQ(truncate_eigenvoices(t, 2).a, t.a);
  EXPECT_EQ(truncate_eigenvoices(t, 3).psi, t.psi);
  const auto zero = truncate_eigenvoices(t, 0);
  EXPECT_EQ(zero.psi, Vector::Zero(3));
  Trial trial{{(Vector(3) << 0.6, 0.8, 0).finished()}, (Vector(3) << 0, 0.6, 0.8).finished()};
  EXPECT_EQ(score_trial(trial, zero), 0.0);
  EXPECT_THROW(truncate_eigenvoices(t, 4), UsageError);
  EXPECT_THROW(truncate_eigenvoices(t, -1), UsageError);
}

TEST(Score, HandValues) {
  const Vector psi = Vector::Ones(1);
  const std::vector<Vector> one{Vector::Ones(1)};
  EXPECT_NEAR(score_llr(one, Vector::Ones(1), psi), 0.5 * std::log(4.0 / 3.0) + 0.25 - 1.0 / 12.0, 1e-15);
  EXPECT_NEAR(score_llr(one, Vector::Ones(1), psi), 0.310508, 1e-6);
  const std::vector<Vector> four(4, Vector::Zero(1));
  EXPECT_NEAR(score_llr(four, Vector::Zero(1), psi), 0.5 * std::log(2.0 / 1.2), 1e-15);
  EXPECT_NEAR(score_llr(four, Vector::Zero(1), psi), 0.255413, 1e-6);
}

TEST(Score, ZeroPsiGivesZero) {
  Rng rng(26);
  for (int k = 0; k < 10; ++k) {
    std::vector<Vector> e{random_normal(4, 1, rng), random_normal(4, 1, rng)};
    EXPECT_EQ(score_llr(e, Vector(random_normal(4, 1, rng)), Vector::Zero(4)), 0.0);
  }
}

TEST(Score, MatchesIntegrationOracle) {
  Rng rng(27);
  std::uniform_real_distribution<double> psi_d(0.0, 5.0), u_d(-2.0, 2.0);
  std::uniform_int_distribution<int> n_d(1, 6);
  for (int k = 0; k < 20; ++k) {
    const double psi = psi_d(rng), ubar = u_d(rng), u = u_d(rng);
    const int n = n_d(rng);
    const std::vector<Vector> e(n, Vector::Constant(1, ubar));
    EXPECT_NEAR(score_llr(e, Vector::Constant(1, u), Vector::Constant(1, psi)),
                llr_oracle_1d(psi, n, ubar, u), 1e-4);
  }
}

TEST(Score, IncreasesWithAgreement) {
  const Vector psi = Vector::Constant(1, 1.5);
  double prev = -std::numeric_limits<double>::infinity();
  for (int i = 1; i <= 50; ++i) {
    const double a = 0.05 * i;
    const double s = score_llr(std::vector<Vector>{Vector::Constant(1, a)}, Vector::Constant(1, a), psi);
    EXPECT_GT(s, prev);
    prev = s;
  }
}

TEST(Score, EnrollmentOrderDoesNotMatter) {
  Rng rng(28);
  std::vector<Vector> e{random_normal(3, 1, rng), random_normal(3, 1, rng), random_normal(3, 1, rng)};
  const Vector test = random_normal(3, 1, rng), psi = (Vector(3) << 2, 1, 0.5).finished();
  const double s = score_llr(e, test, psi);
  std::sort(e.begin(), e.end(), [](const Vector& a, const Vector& b) { return a(0) < b(0); });
  EXPECT_NEAR(score_llr(e, test, psi), s, 1e-14);
  std::swap(e[0], e[2]);
  EXPECT_NEAR(score_llr(e, test, psi), s, 1e-14);
}

TEST(Score, Errors) {
  const Vector psi = Vector::Ones(2);
  EXPECT_THROW(score_llr(std::vector<Vector>{}, Vector::Zero(2), psi), DataError);
  EXPECT_THROW(score_llr(std::vector<Vector>{Vector::Zero(3)}, Vector::Zero(2), psi), DataError);
  EXPECT_THROW(score_llr(std::vector<Vector>{Vector::Zero(2)}, Vector::Zero(1), psi), DataError);
}

}  // namespace
}  // namespace spkv
