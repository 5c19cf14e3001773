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

#include "oracles.hpp"
#include "spkv/ivector.hpp"
#include "spkv/synthkit.hpp"

namespace spkv {
namespace {

GmmModel unit_ubm_1d() { return GmmModel(Vector::Ones(1), Matrix::Zero(1, 1), {Matrix::Identity(1, 1)}); }

SufficientStats stats_1d(double n, double f) {
  SufficientStats s;
  s.n = Vector::Constant(1, n);
  s.f = Matrix::Constant(1, 1, f);
  return s;
}

GmmModel random_ubm(Eigen::Index c, Eigen::Index d, std::uint64_t seed) {
  Rng rng(seed);
  Vector w = (random_normal(c, 1, rng).array().abs() + 0.5).matrix();
  w /= w.sum();
  std::vector<Matrix> covs;
  for (Eigen::Index k = 0; k < c; ++k) {
    Matrix a = random_normal(d, d, rng);
    covs.push_back(0.5 * a * a.transpose() / static_cast<double>(d) + 0.5 * Matrix::Identity(d, d));
  }
  return GmmModel(w, 3.0 * random_normal(c, d, rng), covs);
}

TEST(AccumulateStats, SingleFrameHardPosterior) {
  Matrix post = Matrix::Zero(1, 5);
  post(0, 3) = 1.0;
  Matrix x(1, 2);
  x << 0.5, -2.0;
  const auto s = accumulate_stats(post, x, "u");
  EXPECT_EQ(s.n, (Vector(5) << 0, 0, 0, 1, 0).finished());
  EXPECT_EQ(s.f.row(3), x.row(0));
  EXPECT_EQ(s.f.norm(), x.norm());
  EXPECT_EQ(s.utterance_id, "u");
}

TEST(AccumulateStats, SplitPosteriors) {
  Matrix post = Matrix::Constant(2, 2, 0.5);
  Matrix x(2, 3);
  x << 1, 2, 3, 1, 2, 3;
  const auto s = accumulate_stats(post, x);
  EXPECT_EQ(s.n, Vector::Ones(2));
  EXPECT_EQ(s.f.row(0), x.row(0));
  EXPECT_EQ(s.f.row(1), x.row(0));
}

TEST(AccumulateStats, MatchesBruteForceLoop) {
  Rng rng(1);
  Matrix post = random_normal(50, 4, rng).array().abs();
  post.array().colwise() /= post.rowwise().sum().array();
  const Matrix x = random_normal(50, 3, rng);
  const auto s = accumulate_stats(post, x);
  for (int c = 0; c < 4; ++c) {
    double n = 0;
    Vector f = Vector::Zero(3);
    for (int t = 0; t < 50; ++t) {
      n += post(t, c);
      for (int k = 0; k < 3; ++k) f(k) += post(t, c) * x(t, k);
    }
    EXPECT_NEAR(s.n(c), n, 1e-12);
    EXPECT_LT((s.f.row(c).transpose() - f).norm(), 1e-12);
  }
  EXPECT_NEAR(s.n.sum(), 50.0, 1e-9);
}

TEST(AccumulateStats, ConcatenationEqualsSum) {
  Rng rng(2);
  Matrix post(8, 2);
  post.col(0) = Vector::LinSpaced(8, 0.0, 1.0);
  post.col(1) = Vector::Ones(8) - post.col(0);
  const Matrix x = random_normal(8, 2, rng);
  auto a = accumulate_stats(post.topRows(5), x.topRows(5));
  a += accumulate_stats(post.bottomRows(3), x.bottomRows(3));
  const auto all = accumulate_stats(post, x);
  EXPECT_LT((a.n - all.n).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((a.f - all.f).cwiseAbs().maxCoeff(), 1e-14);
  // Dyadic posteriors and integer frames keep every partial sum exact.
  Matrix q(8, 2);
  q.col(0) << 0.25, 0.5, 1, 0, 0.75, 0.5, 0.125, 1;
  q.col(1) = Vector::Ones(8) - q.col(0);
  const Matrix xi = (4.0 * x).array().round();
  auto h1 = accumulate_stats(q.topRows(5), xi.topRows(5));
  h1 += accumulate_stats(q.bottomRows(3), xi.bottomRows(3));
  const auto h = accumulate_stats(q, xi);
  EXPECT_EQ(h1.n, h.n);
  EXPECT_EQ(h1.f, h.f);
}

TEST(AccumulateStats, ShapeMismatch) {
  EXPECT_THROW(accumulate_stats(Matrix::Zero(3, 2), Matrix::Zero(4, 2)), DataError);
}

TEST(Extract, HandExample) {
  TotalVariabilityModel m(unit_ubm_1d(), Matrix::Ones(1, 1));
  const auto p = m.posterior(stats_1d(1.0, 2.0));
  EXPECT_NEAR(p.precision.matrixLLT()(0, 0) * p.precision.matrixLLT()(0, 0), 2.0, 1e-15);
  EXPECT_NEAR(extract_ivector(stats_1d(1.0, 2.0), m).w(0), 1.0, 1e-15);
}

TEST(Extract, ZeroStatsGivePriorMean) {
  const auto ubm = random_ubm(4, 3, 3);
  Rng rng(4);
  TotalVariabilityModel m(ubm, random_normal(12, 2, rng));
  SufficientStats s;
  s.n = Vector::Zero(4);
  s.f = Matrix::Zero(4, 3);
  EXPECT_EQ(extract_ivector(s, m).w, Vector::Zero(2));
}

TEST(Extract, DeterministicAndLinearInCenteredStats) {
  const auto ubm = random_ubm(4, 3, 5);
  Rng rng(6);
  TotalVariabilityModel m(ubm, random_normal(12, 3, rng));
  SufficientStats s1, s2, s12;
  s1.n = s2.n = s12.n = (Vector(4) << 3, 0, 5, 1).finished();
  // f = n*mean + f~ so that the centred parts add.
  const Matrix base = s1.n.asDiagonal() * ubm.means();
  const Matrix g1 = random_normal(4, 3, rng), g2 = random_normal(4, 3, rng);
  s1.f = base + g1;
  s2.f = base + g2;
  s12.f = base + g1 + g2;
  const Vector w1 = extract_ivector(s1, m).w, w2 = extract_ivector(s2, m).w;
  EXPECT_EQ(w1, extract_ivector(s1, m).w);
  EXPECT_LT((extract_ivector(s12, m).w - w1 - w2).norm(), 1e-12);
}

TEST(Extract, DimensionMismatch) {
  TotalVariabilityModel m(unit_ubm_1d(), Matrix::Ones(1, 1));
  SufficientStats s;
  s.n = Vector::Ones(2);
  s.f = Matrix::Ones(2, 1);
  EXPECT_THROW(extract_ivector(s, m), DataError);
}

TEST(Extract, DiagonalFlagIgnoresOffDiagonalCovariance) {
  Matrix cov(2, 2);
  cov << 2.0, 0.8, 0.8, 1.0;
  GmmModel full(Vector::Ones(1), Matrix::Zero(1, 2), {cov});
  GmmModel diag(Vector::Ones(1), Matrix::Zero(1, 2), {Matrix(cov.diagonal().asDiagonal())});
  Matrix t(2, 1);
  t << 1.0, 0.5;
  SufficientStats s;
  s.n = Vector::Constant(1, 2.0);
  s.f = (Matrix(1, 2) << 1.0, -1.0).finished();
  const double a = extract_ivector(s, TotalVariabilityModel(full, t, true)).w(0);
  const double b = extract_ivector(s, TotalVariabilityModel(diag, t, false)).w(0);
  EXPECT_NEAR(a, b, 1e-14);
}

TEST(TvEm, HandUpdate) {
  TotalVariabilityModel m(unit_ubm_1d(), Matrix::Ones(1, 1));
  double obj = 0;
  const auto next = tv_em_step(m, {stats_1d(1.0, 2.0)}, 0, &obj);
  EXPECT_NEAR(next.t()(0, 0), 2.0 / 1.5, 1e-15);
  EXPECT_NEAR(next.t()(0, 0), 1.3333, 1e-4);
  // b = 2, L = 2: 0.5 * b * E[w] - 0.5 * log L
  EXPECT_NEAR(obj, 0.5 * 2.0 - 0.5 * std::log(2.0), 1e-15);
}

TEST(TvEm, ZeroCenteredStatsAreDegenerate) {
  const auto ubm = random_ubm(2, 2, 7);
  std::vector<SufficientStats> stats;
  for (int u = 0; u < 5; ++u) {
    SufficientStats s;
    s.n = (Vector(2) << 4, 6).finished();
    s.f = s.n.asDiagonal() * ubm.means();
    stats.push_back(s);
  }
  TvConfig cfg;
  cfg.rank = 2;
  cfg.iterations = 1;
  try {
    train_tv_em(stats, ubm, cfg);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("degenerate"), std::string::npos);
  }
}

TEST(TvEm, SingularGramNamesComponent) {
  const auto ubm = random_ubm(3, 2, 8);
  std::vector<SufficientStats> stats;
  Rng rng(9);
  for (int u = 0; u < 4; ++u) {
    SufficientStats s;
    s.n = (Vector(3) << 5, 0, 5).finished();  // component 1 never observed
    s.f = s.n.asDiagonal() * ubm.means() + random_normal(3, 2, rng);
    s.f.row(1).setZero();
    stats.push_back(s);
  }
  TvConfig cfg;
  cfg.rank = 2;
  cfg.iterations = 1;
  try {
    train_tv_em(stats, ubm, cfg);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("component 1"), std::string::npos) << e.what();
  }
}

TEST(TvEm, TooFewUtterances) {
  TvConfig cfg;
  cfg.rank = 3;
  EXPECT_THROW(train_tv_em({stats_1d(1, 1), stats_1d(1, 2)}, unit_ubm_1d(), cfg), DataError);
}

TEST(TvEm, RecoversSubspaceAndIsMonotone) {
  const auto ubm = random_ubm(8, 4, 10);
  Rng rng(11);
  const Matrix t_true = random_normal(32, 3, rng);
  const auto corpus = gen_tv_corpus(ubm, t_true, 400, 200, 12);
  TvConfig cfg;
  cfg.rank = 3;
  cfg.iterations = 10;
  cfg.seed = 13;
  std::vector<double> trace;
  const auto model = train_tv_em(corpus.stats, ubm, cfg, &trace);
  ASSERT_EQ(trace.size(), 11u);
  for (std::size_t i = 1; i < trace.size(); ++i)
    EXPECT_GE(trace[i], trace[i - 1] - 1e-6 * std::abs(trace[i - 1])) << i;
  EXPECT_LT(oracle::max_principal_angle(t_true, model.t()), 0.2);
  const auto again = train_tv_em(corpus.stats, ubm, cfg);
  EXPECT_EQ(model.t(), again.t());
}

TEST(TvEm, PosteriorPrecisionAlwaysSpd) {
  const auto ubm = random_ubm(3, 2, 14);
  Rng rng(15);
  TotalVariabilityModel m(ubm, 5.0 * random_normal(6, 4, rng));
  std::uniform_real_distribution<double> u(0.0, 1000.0);
  for (int k = 0; k < 50; ++k) {
    SufficientStats s;
    s.n = Vector(3);
    for (int c = 0; c < 3; ++c) s.n(c) = k % 3 == c ? 0.0 : u(rng);
    s.f = random_normal(3, 2, rng);
    EXPECT_NO_THROW(m.posterior(s));
  }
}

}  // namespace
}  // namespace spkv
