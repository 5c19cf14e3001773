// tests/oracles.hpp

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

// Brute-force reference computations used only by the tests. Nothing here
// calls into the code paths it is used to check.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

namespace spkv::oracle {

struct LabeledScore {
  double score;
  bool target;
};

struct RocPoint {
  double pm, pf;
};

// Every candidate threshold (each score value and +inf), counted by a full
// scan, ordered by threshold.
inline std::vector<RocPoint> brute_roc(const std::vector<LabeledScore>& s) {
  std::vector<double> th;
  for (const auto& x : s) th.push_back(x.score);
  th.push_back(std::numeric_limits<double>::infinity());
  std::sort(th.begin(), th.end());
  th.erase(std::unique(th.begin(), th.end()), th.end());
  std::vector<RocPoint> pts;
  for (double t : th) {
    double miss = 0, fa = 0, nt = 0, nn = 0;
    for (const auto& x : s) {
      if (x.target) {
        ++nt;
        if (x.score < t) ++miss;
      } else {
        ++nn;
        if (x.score >= t) ++fa;
      }
    }
    pts.push_back({miss / nt, fa / nn});
  }
  return pts;
}

// Intersection of the ROC polyline with the line P_miss = P_fa, found by
// testing every segment.
inline double brute_eer(const std::vector<LabeledScore>& s) {
  const auto pts = brute_roc(s);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].pm == pts[i].pf) return pts[i].pm;
    if (i + 1 < pts.size()) {
      const double d0 = pts[i].pm - pts[i].pf, d1 = pts[i + 1].pm - pts[i + 1].pf;
      if (d0 < 0 && d1 > 0) {
        // parametrize the segment and solve pm(a) = pf(a)
        const double a = d0 / (d0 - d1);
        return pts[i].pm + a * (pts[i + 1].pm - pts[i].pm);
      }
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

inline double brute_min_dcf(const std::vector<LabeledScore>& s, double p) {
  const double beta = (1 - p) / p;
  double best = beta;  // accept all
  for (const auto& pt : brute_roc(s)) best = std::min(best, pt.pm + beta * pt.pf);
  return best;
}

inline double brute_min_cprimary(const std::vector<LabeledScore>& s) {
  return 0.5 * (brute_min_dcf(s, 0.01) + brute_min_dcf(s, 0.005));
}

inline double gaussian_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                           const Eigen::MatrixXd& cov) {
  const auto d = static_cast<double>(x.size());
  const Eigen::VectorXd diff = x - mean;
  const double q = diff.dot(cov.inverse() * diff);
  return std::exp(-0.5 * q) / std::sqrt(std::pow(2 * std::numbers::pi, d) * cov.determinant());
}

// Largest principal angle between the column spans of a and b.
inline double max_principal_angle(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qa(a), qb(b);
  const Eigen::MatrixXd ua = qa.householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
  const Eigen::MatrixXd ub = qb.householderQ() * Eigen::MatrixXd::Identity(b.rows(), b.cols());
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(ua.transpose() * ub);
  const double smin = svd.singularValues().minCoeff();
  return std::acos(std::clamp(smin, -1.0, 1.0));
}

}  // namespace spkv::oracle
