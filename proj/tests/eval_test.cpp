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
#include "spkv/eval.hpp"

namespace spkv {
namespace {

ScoreSet make_set(const std::vector<double>& tar, const std::vector<double>& non, std::string part = {}) {
  ScoreSet s;
  int i = 0;
  for (double x : tar) s.push_back({"m" + std::to_string(i), "t" + std::to_string(i++), x, TrialLabel::kTarget, part});
  for (double x : non) s.push_back({"m" + std::to_string(i), "t" + std::to_string(i++), x, TrialLabel::kNonTarget, part});
  return s;
}

std::vector<oracle::LabeledScore> labeled(const ScoreSet& s) {
  std::vector<oracle::LabeledScore> out;
  for (const auto& t : s) out.push_back({t.score, t.label == TrialLabel::kTarget});
  return out;
}

ScoreSet random_set(Rng& rng, int n, double sep, bool quantize) {
  std::normal_distribution<double> nd;
  std::bernoulli_distribution is_target(0.3);
  std::vector<double> tar, non;
  for (int i = 0; i < n; ++i) {
    double x = nd(rng);
    if (quantize) x = std::round(2.0 * x) / 2.0;  // force ties
    if (is_target(rng)) tar.push_back(x + sep);
    else non.push_back(x);
  }
  if (tar.empty()) tar.push_back(sep);
  if (non.empty()) non.push_back(0.0);
  return make_set(tar, non);
}

TEST(Fuse, IdenticalSetsAndMean) {
  const auto a = make_set({0.2, 1.0}, {-1.0});
  const auto f = fuse_scores({a, a});
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(f[i].score, a[i].score);
    EXPECT_EQ(f[i].label, a[i].label);
  }
  auto b = a;
  b[0].score = 0.4;
  EXPECT_NEAR(fuse_scores({a, b})[0].score, 0.3, 1e-15);
}

TEST(Fuse, KCopiesIsIdentity) {
  Rng rng(1);
  const auto a = random_set(rng, 100, 1.0, false);
  const auto f = fuse_scores(std::vector<ScoreSet>(7, a));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(f[i].score, a[i].score, 1e-14);
  EXPECT_EQ(compute_eer(f), compute_eer(a));
}

TEST(Fuse, KeyMismatchListsTrials) {
  auto a = make_set({1.0}, {0.0});
  auto b = a;
  b[1].test_id = "other";
  try {
    fuse_scores({a, b});
    FAIL();
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("other"), std::string::npos);
    EXPECT_NE(msg.find("missing trial m1/t1"), std::string::npos);
  }
}

TEST(Fuse, RejectsNonFiniteAndDuplicates) {
  auto a = make_set({1.0}, {0.0});
  a[0].score = std::nan("");
  EXPECT_THROW(fuse_scores({a}), DataError);
  auto b = make_set({1.0}, {0.0});
  b[1].enroll_id = b[0].enroll_id;
  b[1].test_id = b[0].test_id;
  EXPECT_THROW(validate(b), DataError);
}

TEST(Eer, HandCases) {
  EXPECT_DOUBLE_EQ(compute_eer(make_set({2, 3}, {0, 1})), 0.0);
  EXPECT_DOUBLE_EQ(compute_eer(make_set({0, 2}, {1, 3})), 0.5);
  // labels of a perfectly separated set swapped
  const auto swapped = make_set({0, 1}, {2, 3});
  EXPECT_DOUBLE_EQ(compute_eer(swapped), 1.0);
  EXPECT_DOUBLE_EQ(compute_eer(swapped), oracle::brute_eer(labeled(swapped)));
  EXPECT_THROW(compute_eer(make_set({1, 2}, {})), DataError);
}

TEST(Eer, InterpolatesBetweenOperatingPoints) {
  // ROC points (pm, pf): (0,1) (0,2/3) (1/2,2/3) (1/2,1/3) (1,1/3) ... crossing at 1/2 exactly
  const auto s = make_set({1, 3}, {0, 2, 4});
  EXPECT_NEAR(compute_eer(s), oracle::brute_eer(labeled(s)), 1e-15);
  // three targets, one nontarget in the middle: crossing inside a segment
  const auto t = make_set({1, 2, 4}, {3});
  EXPECT_NEAR(compute_eer(t), oracle::brute_eer(labeled(t)), 1e-15);
}

TEST(MinCprimary, HandCases) {
  EXPECT_DOUBLE_EQ(compute_min_cprimary(make_set({2, 3}, {0, 1})), 0.0);
  EXPECT_DOUBLE_EQ(compute_min_cprimary(make_set({1, 1, 1}, {1, 1})), 1.0);
}

TEST(Metrics, MatchBruteForceOnRandomSets) {
  Rng rng(2);
  for (int k = 0; k < 60; ++k) {
    const int n = 2 + k * 16;
    const auto s = random_set(rng, n, 0.5 + 0.05 * k, k % 2 == 0);
    const auto l = labeled(s);
    EXPECT_NEAR(compute_eer(s), oracle::brute_eer(l), 1e-12) << k;
    EXPECT_NEAR(compute_min_cprimary(s), oracle::brute_min_cprimary(l), 1e-12) << k;
    EXPECT_LE(compute_min_cprimary(s), 1.0 + 1e-12);
    EXPECT_GE(compute_eer(s), 0.0);
    const auto pts = roc_points(s);
    const auto ref = oracle::brute_roc(l);
    ASSERT_EQ(pts.size(), ref.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      EXPECT_DOUBLE_EQ(pts[i].p_miss, ref[i].pm);
      EXPECT_DOUBLE_EQ(pts[i].p_fa, ref[i].pf);
    }
  }
}

TEST(Metrics, InvariantUnderMonotoneTransforms) {
  Rng rng(3);
  for (int k = 0; k < 20; ++k) {
    const auto s = random_set(rng, 300, 1.0, k % 2 == 1);
    auto affine = s, cubic = s;
    for (auto& t : affine) t.score = 3.0 * t.score - 7.0;
    for (auto& t : cubic) t.score = t.score * t.score * t.score + t.score;
    EXPECT_DOUBLE_EQ(compute_eer(affine), compute_eer(s));
    EXPECT_DOUBLE_EQ(compute_eer(cubic), compute_eer(s));
    EXPECT_DOUBLE_EQ(compute_min_cprimary(affine), compute_min_cprimary(s));
    EXPECT_DOUBLE_EQ(compute_min_cprimary(cubic), compute_min_cprimary(s));
  }
}

TEST(Report, SinglePartitionEqualsOverall) {
  Rng rng(4);
  const auto s = random_set(rng, 200, 1.5, false);
  const auto r = report(s);
  ASSERT_EQ(r.partitions.size(), 1u);
  ASSERT_TRUE(r.partitions.count("all"));
  EXPECT_EQ(r.partitions.at("all").eer, r.overall.eer);
  EXPECT_EQ(r.partitions.at("all").min_c_primary, r.overall.min_c_primary);
  EXPECT_EQ(r.eer_equalized, r.overall.eer);
}

TEST(Report, PartitionsMatchFilteredSubsets) {
  Rng rng(5);
  auto a = random_set(rng, 150, 2.0, false);
  auto b = random_set(rng, 100, 0.5, false);
  for (auto& t : a) t.partition = "male", t.test_id += "a";
  for (auto& t : b) t.partition = "female", t.test_id += "b";
  ScoreSet all = a;
  all.insert(all.end(), b.begin(), b.end());
  const auto r = report(all);
  ASSERT_EQ(r.partitions.size(), 2u);
  EXPECT_EQ(r.partitions.at("male").eer, compute_eer(a));
  EXPECT_EQ(r.partitions.at("female").min_c_primary, compute_min_cprimary(b));
  EXPECT_NEAR(r.eer_equalized, 0.5 * (compute_eer(a) + compute_eer(b)), 1e-15);
  EXPECT_EQ(r.overall.eer, compute_eer(all));
  const std::string text = format_report(r);
  EXPECT_NE(text.find("linear interpolation"), std::string::npos);
  EXPECT_NE(text.find("female\t"), std::string::npos);
  EXPECT_NE(text.find("pooled\t"), std::string::npos);
}

TEST(Labels, RoundTrip) {
  for (auto l : {TrialLabel::kTarget, TrialLabel::kNonTarget, TrialLabel::kUnknown})
    EXPECT_EQ(trial_label_from_string(to_string(l)), l);
  EXPECT_THROW(trial_label_from_string("maybe"), DataError);
}

}  // namespace
}  // namespace spkv
