// spkv/eval.hpp

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

// Score fusion and detection metrics (EER, minC_primary).

#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "spkv/common.hpp"
#include "spkv/plda.hpp"

namespace spkv {

inline std::string to_string(TrialLabel l) {
  switch (l) {
    case TrialLabel::kTarget: return "target";
    case TrialLabel::kNonTarget: return "nontarget";
    default: return "unknown";
  }
}

inline TrialLabel trial_label_from_string(const std::string& s) {
  if (s == "target" || s == "tgt") return TrialLabel::kTarget;
  if (s == "nontarget" || s == "non" || s == "imp" || s == "impostor") return TrialLabel::kNonTarget;
  if (s.empty() || s == "unknown" || s == "-") return TrialLabel::kUnknown;
  throw DataError("unknown trial label '" + s + "'");
}

struct ScoredTrial {
  std::string enroll_id;
  std::string test_id;
  double score = 0.0;
  TrialLabel label = TrialLabel::kUnknown;
  std::string partition;
};

using ScoreSet = std::vector<ScoredTrial>;

inline void validate(const ScoreSet& set) {
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& t : set) {
    if (!std::isfinite(t.score))
      throw DataError("non-finite score for trial " + t.enroll_id + " / " + t.test_id);
    if (!seen.emplace(t.enroll_id, t.test_id).second)
      throw DataError("duplicate trial " + t.enroll_id + " / " + t.test_id);
  }
}

/// Equal-weight mean of the member scores, trial by trial. Trial keys must
/// match across all sets; the output follows the order of the first set.
inline ScoreSet fuse_scores(const std::vector<ScoreSet>& sets) {
  if (sets.empty()) throw DataError("fuse_scores: no score sets");
  for (const auto& s : sets) validate(s);
  using Key = std::pair<std::string, std::string>;
  std::map<Key, double> sums;
  for (const auto& t : sets.front()) sums[{t.enroll_id, t.test_id}] = 0.0;
  std::vector<std::string> problems;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    std::set<Key> present;
    for (const auto& t : sets[i]) {
      Key k{t.enroll_id, t.test_id};
      auto it = sums.find(k);
      if (it == sums.end()) {
        problems.push_back(detail::concat("set ", i, " has extra trial ", k.first, "/", k.second));
        continue;
      }
      it->second += t.score;
      present.insert(k);
    }
    for (const auto& [k, v] : sums)
      if (!present.count(k))
        problems.push_back(detail::concat("set ", i, " is missing trial ", k.first, "/", k.second));
  }
  if (!problems.empty()) {
    std::string msg = "fuse_scores: trial keys differ:";
    for (std::size_t i = 0; i < problems.size() && i < 20; ++i) msg += "\n  " + problems[i];
    if (problems.size() > 20) msg += detail::concat("\n  ... ", problems.size() - 20, " more");
    throw DataError(msg);
  }
  ScoreSet out = sets.front();
  const double k = static_cast<double>(sets.size());
  for (auto& t : out) t.score = sums[{t.enroll_id, t.test_id}] / k;
  return out;
}

// ---------------------------------------------------------------------------
// Metrics. A trial is accepted when score >= threshold.

struct OperatingPoint {
  double threshold;
  double p_miss;
  double p_fa;
};

namespace detail {
inline void split_scores(const ScoreSet& set, std::vector<double>* tar, std::vector<double>* non) {
  for (const auto& t : set) {
    if (t.label == TrialLabel::kTarget) tar->push_back(t.score);
    else if (t.label == TrialLabel::kNonTarget) non->push_back(t.score);
  }
  if (tar->empty() || non->empty())
    throw DataError("metrics need at least one target and one nontarget labeled trial");
}
}  // namespace detail

/// Operating points at every distinct score value plus +inf, ordered by
/// increasing threshold (P_miss non-decreasing, P_fa non-increasing).
inline std::vector<OperatingPoint> roc_points(const ScoreSet& set) {
  std::vector<double> tar, non;
  detail::split_scores(set, &tar, &non);
  std::sort(tar.begin(), tar.end());
  std::sort(non.begin(), non.end());
  std::vector<double> thresholds(tar);
  thresholds.insert(thresholds.end(), non.begin(), non.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.push_back(std::numeric_limits<double>::infinity());

  std::vector<OperatingPoint> pts;
  pts.reserve(thresholds.size());
  std::size_t it = 0, in = 0;
  const double nt = static_cast<double>(tar.size()), nn = static_cast<double>(non.size());
  for (double th : thresholds) {
    while (it < tar.size() && tar[it] < th) ++it;
    while (in < non.size() && non[in] < th) ++in;
    pts.push_back({th, static_cast<double>(it) / nt, static_cast<double>(nn - in) / nn});
  }
  return pts;
}

/// Point where P_miss = P_fa on the ROC polyline, interpolating linearly
/// between adjacent operating points.
inline double compute_eer(const ScoreSet& set) {
  const auto pts = roc_points(set);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double diff = pts[i].p_miss - pts[i].p_fa;
    if (diff == 0.0) return pts[i].p_miss;
    if (diff > 0.0) {
      // pts[0] has p_miss = 0, so i > 0 here.
      const auto& a = pts[i - 1];
      const auto& b = pts[i];
      const double da = a.p_miss - a.p_fa;
      const double alpha = da / (da - diff);
      return a.p_miss + alpha * (b.p_miss - a.p_miss);
    }
  }
  return pts.back().p_miss;  // unreachable: the last point has p_fa = 0
}

/// Minimum over thresholds of P_miss + (1 - p)/p * P_fa, including the
/// accept-all and reject-all extremes.
inline double min_normalized_dcf(const std::vector<OperatingPoint>& pts, double p_target) {
  const double beta = (1.0 - p_target) / p_target;
  double best = beta;  // accept everything: P_miss = 0, P_fa = 1
  for (const auto& p : pts) best = std::min(best, p.p_miss + beta * p.p_fa);
  return best;
}

inline double compute_min_cprimary(const ScoreSet& set) {
  const auto pts = roc_points(set);
  return 0.5 * (min_normalized_dcf(pts, 0.01) + min_normalized_dcf(pts, 0.005));
}

struct Metrics {
  double eer = 0.0;
  double min_c_primary = 0.0;
  std::size_t num_target = 0;
  std::size_t num_nontarget = 0;
};

struct MetricReport {
  Metrics overall;
  std::map<std::string, Metrics> partitions;
  // Average of per-partition metrics (each partition weighted equally).
  double eer_equalized = 0.0;
  double min_c_equalized = 0.0;
};

inline Metrics compute_metrics(const ScoreSet& set) {
  Metrics m;
  m.eer = compute_eer(set);
  m.min_c_primary = compute_min_cprimary(set);
  for (const auto& t : set) {
    if (t.label == TrialLabel::kTarget) ++m.num_target;
    if (t.label == TrialLabel::kNonTarget) ++m.num_nontarget;
  }
  return m;
}

/// Overall metrics plus one row per partition key; an empty key is
/// reported under "all".
inline MetricReport report(const ScoreSet& set) {
  MetricReport r;
  r.overall = compute_metrics(set);
  std::map<std::string, ScoreSet> parts;
  for (const auto& t : set) parts[t.partition.empty() ? "all" : t.partition].push_back(t);
  double eer_sum = 0.0, c_sum = 0.0;
  int counted = 0;
  for (const auto& [key, sub] : parts) {
    try {
      r.partitions[key] = compute_metrics(sub);
      eer_sum += r.partitions[key].eer;
      c_sum += r.partitions[key].min_c_primary;
      ++counted;
    } catch (const DataError&) {
      log_warning("partition '", key, "' lacks target or nontarget trials; skipped");
    }
  }
  r.eer_equalized = counted ? eer_sum / counted : r.overall.eer;
  r.min_c_equalized = counted ? c_sum / counted : r.overall.min_c_primary;
  return r;
}

inline std::string format_report(const MetricReport& r) {
  std::ostringstream os;
  os << "# EER by linear interpolation between ROC points; minC_primary = mean of min "
        "normalized DCF at P_target 0.01 and 0.005\n";
  os << "partition\ttargets\tnontargets\teer_percent\tmin_c_primary\n";
  auto row = [&](const std::string& name, const Metrics& m) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s\t%zu\t%zu\t%.4f\t%.6f\n", name.c_str(), m.num_target,
                  m.num_nontarget, 100.0 * m.eer, m.min_c_primary);
    os << buf;
  };
  for (const auto& [k, m] : r.partitions) row(k, m);
  row("pooled", r.overall);
  char buf[128];
  std::snprintf(buf, sizeof(buf), "equalized\t-\t-\t%.4f\t%.6f\n", 100.0 * r.eer_equalized,
                r.min_c_equalized);
  os << buf;
  return os.str();
}

}  // namespace spkv
