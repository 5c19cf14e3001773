// spkv/common.hpp

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

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

namespace spkv {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// ---------------------------------------------------------------------------
// Errors. The category maps onto the CLI exit code.

enum class ErrorKind { kUsage = 1, kData = 2, kNumerical = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

struct UsageError : Error {
  explicit UsageError(const std::string& w) : Error(ErrorKind::kUsage, w) {}
};
struct DataError : Error {
  explicit DataError(const std::string& w) : Error(ErrorKind::kData, w) {}
};
struct NumericalError : Error {
  explicit NumericalError(const std::string& w)
      : Error(ErrorKind::kNumerical, w) {}
};

/// Rethrows e as the same concrete kind with a context prefix.
[[noreturn]] inline void rethrow_with_context(const Error& e, const std::string& prefix) {
  const std::string w = prefix + e.what();
  switch (e.kind()) {
    case ErrorKind::kUsage: throw UsageError(w);
    case ErrorKind::kData: throw DataError(w);
    default: throw NumericalError(w);
  }
}

namespace detail {
template <typename... Args>
std::string concat(Args&&... args) {
  std::ostringstream oss;
  (oss << ... << std::forward<Args>(args));
  return oss.str();
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Logging. Warnings go to stderr unless a sink is installed (tests capture
// them this way).

using LogSink = std::function<void(std::string_view level, std::string_view)>;

inline LogSink& log_sink() {
  static LogSink sink;
  return sink;
}

inline void log_message(std::string_view level, std::string_view msg) {
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  if (log_sink()) {
    log_sink()(level, msg);
  } else {
    std::cerr << level << " (spkv) " << msg << '\n';
  }
}

template <typename... Args>
void log_warning(Args&&... args) {
  log_message("WARNING", detail::concat(std::forward<Args>(args)...));
}

/// Reported at error severity without aborting the computation.
template <typename... Args>
void log_error(Args&&... args) {
  log_message("ERROR", detail::concat(std::forward<Args>(args)...));
}

template <typename... Args>
void log_info(Args&&... args) {
  log_message("LOG", detail::concat(std::forward<Args>(args)...));
}

// ---------------------------------------------------------------------------
// Embedding vectors carried through the back-end.

struct IVector {
  Vector w;
  std::string utterance_id;
  std::string speaker;    // empty when unlabeled
  std::string partition;  // subset / trial-metadata key, may be empty
};

using IVectorSet = std::vector<IVector>;

inline Matrix stack_rows(const IVectorSet& vs) {
  if (vs.empty()) return Matrix();
  Matrix m(static_cast<Eigen::Index>(vs.size()), vs.front().w.size());
  for (std::size_t i = 0; i < vs.size(); ++i)
    m.row(static_cast<Eigen::Index>(i)) = vs[i].w.transpose();
  return m;
}

// ---------------------------------------------------------------------------
// Randomness. Every stochastic routine takes an explicit seed; stage seeds
// are derived from one root seed by hashing the stage name.

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return splitmix64(root ^ splitmix64(h));
}

inline Matrix random_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = nd(rng);
  return m;
}

// ---------------------------------------------------------------------------
// Small linear-algebra helpers.

inline bool is_finite(const Matrix& m) { return m.allFinite(); }

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

// Cholesky factorization that reports failure instead of returning garbage.
inline Eigen::LLT<Matrix> checked_llt(const Matrix& m, std::string_view what) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success || !m.allFinite())
    throw NumericalError(detail::concat(what, ": matrix is not positive definite"));
  return llt;
}

inline double llt_logdet(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

// Clamp the eigenvalues of a symmetric matrix from below.
inline Matrix floor_eigenvalues(const Matrix& s, double floor) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(s));
  Vector ev = es.eigenvalues();
  if (ev.minCoeff() >= floor) return symmetrize(s);
  ev = ev.cwiseMax(floor);
  return symmetrize(es.eigenvectors() * ev.asDiagonal() *
                    es.eigenvectors().transpose());
}

// ---------------------------------------------------------------------------
// Deterministic parallel map: work item i is always computed by fn(i) and
// results are consumed in index order, so output never depends on the
// worker count.

template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t nw = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(nw);
  pool.reserve(nw);
  for (std::size_t w = 0; w < nw; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += nw) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace spkv
