// spkv/io.hpp

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

// On-disk formats.
//
// IVMX matrix:  "IVMX" | version u8 = 1 | dtype u8 = 1 (float32)
//               | rows u32le | cols u32le | rows*cols float32le, row-major
//
// Model records are a 4-byte tag, a version byte, optional u32le scalars,
// then IVMX sub-blocks:
//   IVGM  GMM:        C, D | weights 1xC | means CxD | covariances (C*D)xD
//   IVTV  TV model:   diag flag | IVGM record | T (C*D)xR
//   IVST  stats:      n 1xC | f CxD
//   IVLW  LW:         mu 1xR | W RxR
//   IVID  IDVC:       center 1xR | basis RxK
//   IVMS  mean shift: delta 1xR
//   IVPR  PLDA B/W:   m_all 1xR | B RxR | W RxR
//   IVPL  PLDA scoring model: rank | m_all 1xR | A RxR | psi 1xR
//
// Text formats are tab-separated: i-vector sidecar (utt, speaker, partition),
// trial key (enroll, test, label, partition), enrollment map (enroll, utt),
// scores (enroll, test, score with 6 decimals).

#pragma once

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "spkv/common.hpp"
#include "spkv/embedspace.hpp"
#include "spkv/eval.hpp"
#include "spkv/gmm.hpp"
#include "spkv/ivector.hpp"
#include "spkv/plda.hpp"
#include "spkv/synthkit.hpp"

namespace spkv {

namespace io_detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class Reader {
 public:
  Reader(std::string_view bytes, std::string name) : b_(bytes), name_(std::move(name)) {}

  void expect_tag(std::string_view tag) {
    if (b_.size() < pos_ + tag.size() || b_.substr(pos_, tag.size()) != tag)
      throw DataError(name_ + ": expected '" + std::string(tag) + "' record");
    pos_ += tag.size();
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(b_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw DataError(name_ + ": truncated file");
  }
  std::size_t remaining() const { return b_.size() - pos_; }
  const std::string& name() const { return name_; }

 private:
  std::string_view b_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace io_detail

// ---------------------------------------------------------------------------
// IVMX

inline void append_ivmx(std::string& out, const Matrix& m) {
  out += "IVMX";
  out.push_back(1);
  out.push_back(1);
  io_detail::put_u32(out, static_cast<std::uint32_t>(m.rows()));
  io_detail::put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      io_detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(m(i, j))));
}

inline std::string encode_ivmx(const Matrix& m) {
  std::string out;
  out.reserve(14 + 4 * static_cast<std::size_t>(m.size()));
  append_ivmx(out, m);
  return out;
}

inline Matrix read_ivmx_block(io_detail::Reader& r) {
  r.expect_tag("IVMX");
  if (r.u8() != 1) throw DataError(r.name() + ": unsupported IVMX version");
  if (r.u8() != 1) throw DataError(r.name() + ": unsupported IVMX dtype");
  const std::uint32_t rows = r.u32(), cols = r.u32();
  r.need(4ull * rows * cols);
  Matrix m(rows, cols);
  for (std::uint32_t i = 0; i < rows; ++i)
    for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = r.f32();
  return m;
}

inline Matrix decode_ivmx(std::string_view bytes, const std::string& name = "ivmx") {
  io_detail::Reader r(bytes, name);
  Matrix m = read_ivmx_block(r);
  if (r.remaining() != 0)
    throw DataError(name + ": payload length does not match rows*cols");
  return m;
}

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a sibling temporary file and renames it into place.
inline void atomic_write(const std::string& path, std::string_view bytes) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + tmp);
  }
  fs::rename(tmp, target);
}

inline void write_ivmx(const std::string& path, const Matrix& m) { atomic_write(path, encode_ivmx(m)); }
inline Matrix read_ivmx(const std::string& path) { return decode_ivmx(read_file(path), path); }

// ---------------------------------------------------------------------------
// Model records

namespace io_detail {
inline std::string header(std::string_view tag) {
  std::string s(tag);
  s.push_back(1);
  return s;
}
inline void expect_header(Reader& r, std::string_view tag) {
  r.expect_tag(tag);
  if (r.u8() != 1) throw DataError(r.name() + ": unsupported " + std::string(tag) + " version");
}
inline Matrix row(const Vector& v) { return v.transpose(); }
inline Vector vec(const Matrix& m) {
  if (m.rows() != 1) throw DataError("expected a 1xN block");
  return m.row(0).transpose();
}
inline void finish(const Reader& r) {
  if (r.remaining() != 0) throw DataError(r.name() + ": trailing bytes");
}
}  // namespace io_detail

inline void append_gmm(std::string& out, const GmmModel& g) {
  out += io_detail::header("IVGM");
  const auto c = g.num_components(), d = g.dim();
  io_detail::put_u32(out, static_cast<std::uint32_t>(c));
  io_detail::put_u32(out, static_cast<std::uint32_t>(d));
  append_ivmx(out, io_detail::row(g.weights()));
  append_ivmx(out, g.means());
  Matrix covs(c * d, d);
  for (Eigen::Index k = 0; k < c; ++k) covs.middleRows(k * d, d) = g.covariance(k);
  append_ivmx(out, covs);
}

inline GmmModel read_gmm_record(io_detail::Reader& r) {
  io_detail::expect_header(r, "IVGM");
  const Eigen::Index c = r.u32(), d = r.u32();
  Vector w = io_detail::vec(read_ivmx_block(r));
  Matrix means = read_ivmx_block(r);
  Matrix covs = read_ivmx_block(r);
  if (w.size() != c || means.rows() != c || means.cols() != d || covs.rows() != c * d || covs.cols() != d)
    throw DataError(r.name() + ": GMM blocks disagree with header");
  std::vector<Matrix> cv(c);
  for (Eigen::Index k = 0; k < c; ++k) cv[k] = covs.middleRows(k * d, d);
  w /= w.sum();  // float32 rounding
  return GmmModel(std::move(w), std::move(means), std::move(cv));
}

inline std::string encode_gmm(const GmmModel& g) {
  std::string s;
  append_gmm(s, g);
  return s;
}
inline GmmModel decode_gmm(std::string_view b, const std::string& name = "gmm") {
  io_detail::Reader r(b, name);
  auto g = read_gmm_record(r);
  io_detail::finish(r);
  return g;
}

inline std::string encode_tv(const TotalVariabilityModel& m) {
  std::string s = io_detail::header("IVTV");
  io_detail::put_u32(s, m.diagonal() ? 1u : 0u);
  append_gmm(s, m.ubm());
  append_ivmx(s, m.t());
  return s;
}
inline TotalVariabilityModel decode_tv(std::string_view b, const std::string& name = "tv") {
  io_detail::Reader r(b, name);
  io_detail::expect_header(r, "IVTV");
  const bool diag = r.u32() != 0;
  GmmModel g = read_gmm_record(r);
  Matrix t = read_ivmx_block(r);
  io_detail::finish(r);
  return TotalVariabilityModel(std::move(g), std::move(t), diag);
}

inline std::string encode_stats(const SufficientStats& s) {
  std::string out = io_detail::header("IVST");
  append_ivmx(out, io_detail::row(s.n));
  append_ivmx(out, s.f);
  return out;
}
inline SufficientStats decode_stats(std::string_view b, const std::string& name = "stats") {
  io_detail::Reader r(b, name);
  io_detail::expect_header(r, "IVST");
  SufficientStats s;
  s.n = io_detail::vec(read_ivmx_block(r));
  s.f = read_ivmx_block(r);
  io_detail::finish(r);
  if (s.f.rows() != s.n.size()) throw DataError(name + ": stats blocks disagree");
  return s;
}

inline std::string encode_lw(const LwTransform& t) {
  std::string s = io_detail::header("IVLW");
  append_ivmx(s, io_detail::row(t.mu));
  append_ivmx(s, t.w);
  return s;
}
inline LwTransform decode_lw(std::string_view b, const std::string& name = "lw") {
  io_detail::Reader r(b, name);
  io_detail::expect_header(r, "IVLW");
  Vector mu = io_detail::vec(read_ivmx_block(r));
  Matrix w = read_ivmx_block(r);
  io_detail::finish(r);
  return LwTransform::from_covariance(std::move(mu), std::move(w));
}

inline std::string encode_idvc(const IdvcModel& m) {
  std::string s = io_detail::header("IVID");
  append_ivmx(s, io_detail::row(m.center));
  append_ivmx(s, m.basis);
  return s;
}
inline IdvcModel decode_idvc(std::string_view b, const std::string& name = "idvc") {
  io_detail::Reader r(b, name);
  io_detail::expect_header(r, "IVID");
  IdvcModel m;
  m.center = io_detail::vec(read_ivmx_block(r));
  m.basis = read_ivmx_block(r);
  io_detail::finish(r);
  if (m.basis.cols() > 0) {
    // Re-orthonormalize after float32 storage.
    Eigen::HouseholderQR<Matrix> qr(m.basis);
    Matrix q = qr.householderQ() * Matrix::Identity(m.basis.rows(), m.basis.cols());
    for (Eigen::Index j = 0; j < q.cols(); ++j)
      if (q.col(j).dot(m.basis.col(j)) < 0) q.col(j) = -q.col(j);
    m.basis = q;
  }
  return m;
}

inline std::string encode_mean_shift(const MeanShift& m) {
  std::string s = io_detail::header("IVMS");
  append_ivmx(s, io_detail::row(m.delta));
  return s;
}
inline MeanShift decode_mean_shift(std::string_view b, const std::string& name = "meanshift") {
  io_detail::Reader r(b, name);
  io_detail::expect_header(r, "IVMS");
  MeanShift m{io_detail::vec(read_ivmx_block(r))};
  io_detail::finish(r);
  return m;
}

inline std::string encode_plda(const PldaModel& m) {
  std::string s = io_detail::header("IVPR");
  append_ivmx(s, io_detail::row(m.m_all));
  append_ivmx(s, m.b);
  append_ivmx(s, m.w);
  return s;
}
inline PldaModel decode_plda(std::string_view b, const std::string& name = "plda") {
  io_detail::Reader r(b, name);
  io_detail::expect_header(r, "IVPR");
  PldaModel m;
  m.m_all = io_detail::vec(read_ivmx_block(r));
  m.b = symmetrize(read_ivmx_block(r));
  m.w = symmetrize(read_ivmx_block(r));
  io_detail::finish(r);
  return m;
}

inline std::string encode_postnorm(const PostNormTransform& t) {
  std::string s = io_detail::header("IVPL");
  io_detail::put_u32(s, static_cast<std::uint32_t>(t.rank));
  append_ivmx(s, io_detail::row(t.mean));
  append_ivmx(s, t.a);
  append_ivmx(s, io_detail::row(t.psi));
  return s;
}
inline PostNormTransform decode_postnorm(std::string_view b, const std::string& name = "plda") {
  io_detail::Reader r(b, name);
  io_detail::expect_header(r, "IVPL");
  PostNormTransform t;
  t.rank = static_cast<int>(r.u32());
  t.mean = io_detail::vec(read_ivmx_block(r));
  t.a = read_ivmx_block(r);
  t.psi = io_detail::vec(read_ivmx_block(r));
  io_detail::finish(r);
  if (t.a.rows() != t.psi.size() || t.a.cols() != t.mean.size() || t.rank > t.psi.size())
    throw DataError(name + ": PLDA scoring blocks disagree");
  return t;
}

// ---------------------------------------------------------------------------
// Tab-separated text

inline std::vector<std::vector<std::string>> read_tsv(const std::string& path, std::size_t min_fields) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() < min_fields)
      throw DataError(detail::concat(path, ":", lineno, ": expected at least ", min_fields, " fields"));
    rows.push_back(std::move(fields));
  }
  return rows;
}

inline void write_ivectors(const std::string& matrix_path, const IVectorSet& vs) {
  Matrix m = stack_rows(vs);
  write_ivmx(matrix_path, m);
  std::string tsv;
  for (const auto& v : vs) tsv += v.utterance_id + '\t' + v.speaker + '\t' + v.partition + '\n';
  atomic_write(matrix_path + ".tsv", tsv);
}

inline IVectorSet read_ivectors(const std::string& matrix_path) {
  const Matrix m = read_ivmx(matrix_path);
  const auto rows = read_tsv(matrix_path + ".tsv", 1);
  if (static_cast<Eigen::Index>(rows.size()) != m.rows())
    throw DataError(detail::concat(matrix_path, ": ", m.rows(), " vectors but ", rows.size(), " sidecar rows"));
  IVectorSet vs(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    vs[i].w = m.row(static_cast<Eigen::Index>(i)).transpose();
    vs[i].utterance_id = rows[i][0];
    if (rows[i].size() > 1) vs[i].speaker = rows[i][1];
    if (rows[i].size() > 2) vs[i].partition = rows[i][2];
  }
  return vs;
}

inline void write_trial_key(const std::string& path, const std::vector<TrialKey>& key) {
  std::string s;
  for (const auto& k : key) s += k.enroll_id + '\t' + k.test_id + '\t' + to_string(k.label) + '\t' + k.partition + '\n';
  atomic_write(path, s);
}

inline std::vector<TrialKey> read_trial_key(const std::string& path) {
  std::vector<TrialKey> out;
  for (auto& f : read_tsv(path, 2)) {
    TrialKey k;
    k.enroll_id = f[0];
    k.test_id = f[1];
    if (f.size() > 2) k.label = trial_label_from_string(f[2]);
    if (f.size() > 3) k.partition = f[3];
    out.push_back(std::move(k));
  }
  return out;
}

using EnrollMap = std::vector<std::pair<std::string, std::vector<std::string>>>;

inline void write_enroll_map(const std::string& path, const EnrollMap& models) {
  std::string s;
  for (const auto& [m, utts] : models)
    for (const auto& u : utts) s += m + '\t' + u + '\n';
  atomic_write(path, s);
}

inline EnrollMap read_enroll_map(const std::string& path) {
  EnrollMap out;
  std::map<std::string, std::size_t> idx;
  for (auto& f : read_tsv(path, 2)) {
    auto [it, inserted] = idx.emplace(f[0], out.size());
    if (inserted) out.emplace_back(f[0], std::vector<std::string>{});
    out[it->second].second.push_back(f[1]);
  }
  return out;
}

inline std::string format_score(double s) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", s);
  return buf;
}

inline void write_scores(const std::string& path, const ScoreSet& set) {
  std::string s;
  for (const auto& t : set) s += t.enroll_id + '\t' + t.test_id + '\t' + format_score(t.score) + '\n';
  atomic_write(path, s);
}

/// Reads a score file; labels and partitions come from the optional key.
inline ScoreSet read_scores(const std::string& path, const std::vector<TrialKey>* key = nullptr) {
  std::map<std::pair<std::string, std::string>, const TrialKey*> lookup;
  if (key)
    for (const auto& k : *key) lookup[{k.enroll_id, k.test_id}] = &k;
  ScoreSet out;
  for (auto& f : read_tsv(path, 3)) {
    ScoredTrial t;
    t.enroll_id = f[0];
    t.test_id = f[1];
    try {
      t.score = std::stod(f[2]);
    } catch (const std::exception&) {
      throw DataError(path + ": bad score '" + f[2] + "'");
    }
    if (key) {
      auto it = lookup.find({t.enroll_id, t.test_id});
      if (it == lookup.end())
        throw DataError(path + ": trial " + t.enroll_id + "/" + t.test_id + " not in key");
      t.label = it->second->label;
      t.partition = it->second->partition;
    }
    out.push_back(std::move(t));
  }
  validate(out);
  return out;
}

}  // namespace spkv
