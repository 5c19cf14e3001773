// spkv/frontend.hpp

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

// Acoustic front-end: 8 kHz framing, MFCC and PLP cepstra with a log-energy
// channel, regression deltas, sliding-window CMN and an energy-based VAD.

#pragma once

#include <unsupported/Eigen/FFT>

#include <complex>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "spkv/common.hpp"

namespace spkv {

struct AudioSignal {
  std::vector<float> samples;  // in [-1, 1]
  int sample_rate = 8000;
};

enum class FeatureKind { kMfcc, kPlp };

inline std::string to_string(FeatureKind k) {
  return k == FeatureKind::kMfcc ? "mfcc" : "plp";
}

inline FeatureKind feature_kind_from_string(const std::string& s) {
  if (s == "mfcc") return FeatureKind::kMfcc;
  if (s == "plp") return FeatureKind::kPlp;
  throw UsageError("unknown feature kind '" + s + "' (expected mfcc or plp)");
}

struct FeatureMatrix {
  Matrix data;  // frames x coefficients
  int energy_index = 0;
  double frame_period = 0.010;
  FeatureKind kind = FeatureKind::kMfcc;

  Eigen::Index num_frames() const { return data.rows(); }
  Eigen::Index dim() const { return data.cols(); }
};

using VadMask = std::vector<bool>;

struct FrontendConfig {
  double frame_length_s = 0.025;
  double frame_shift_s = 0.010;
  int num_ceps = 19;  // plus the log-energy column
  int num_mel_bins = 23;
  double low_freq = 20.0;
  double high_freq = 3800.0;
  int num_bark_bins = 17;
  int lpc_order = 12;
  double preemph = 0.97;
  double energy_floor = 1e-10;
  double cmn_window_s = 3.0;
};

struct VadConfig {
  // threshold = mean(log-energy) + offset_scale * std(log-energy)
  double offset_scale = -0.5;
  int window = 11;
};

// ---------------------------------------------------------------------------
// WAV I/O (PCM 16-bit, mono).

namespace detail {
inline std::uint32_t read_u32le(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
         (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}
inline std::uint16_t read_u16le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void put_u32le(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u16le(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}
}  // namespace detail

inline AudioSignal parse_wav(const std::string& bytes, const std::string& name = "wav") {
  const auto* b = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 12 || std::memcmp(b, "RIFF", 4) != 0 || std::memcmp(b + 8, "WAVE", 4) != 0)
    throw DataError(name + ": not a RIFF/WAVE file");
  std::size_t pos = 12;
  bool have_fmt = false;
  AudioSignal sig;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t size = detail::read_u32le(b + pos + 4);
    const unsigned char* body = b + pos + 8;
    if (pos + 8 + size > bytes.size()) throw DataError(name + ": truncated chunk");
    if (std::memcmp(b + pos, "fmt ", 4) == 0) {
      if (size < 16) throw DataError(name + ": bad fmt chunk");
      const auto format = detail::read_u16le(body);
      const auto channels = detail::read_u16le(body + 2);
      const auto bits = detail::read_u16le(body + 14);
      sig.sample_rate = static_cast<int>(detail::read_u32le(body + 4));
      if (format != 1 || channels != 1 || bits != 16)
        throw DataError(name + ": only 16-bit PCM mono WAV is supported");
      have_fmt = true;
    } else if (std::memcmp(b + pos, "data", 4) == 0) {
      if (!have_fmt) throw DataError(name + ": data chunk before fmt chunk");
      sig.samples.resize(size / 2);
      for (std::size_t i = 0; i < sig.samples.size(); ++i) {
        auto v = static_cast<std::int16_t>(detail::read_u16le(body + 2 * i));
        sig.samples[i] = static_cast<float>(v) / 32768.0f;
      }
      return sig;
    }
    pos += 8 + size + (size & 1);
  }
  throw DataError(name + ": no data chunk");
}

inline AudioSignal read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_wav(bytes, path);
}

inline std::string encode_wav(const AudioSignal& sig) {
  std::string out;
  const auto n = static_cast<std::uint32_t>(sig.samples.size());
  out += "RIFF";
  detail::put_u32le(out, 36 + 2 * n);
  out += "WAVEfmt ";
  detail::put_u32le(out, 16);
  detail::put_u16le(out, 1);
  detail::put_u16le(out, 1);
  detail::put_u32le(out, static_cast<std::uint32_t>(sig.sample_rate));
  detail::put_u32le(out, static_cast<std::uint32_t>(sig.sample_rate) * 2);
  detail::put_u16le(out, 2);
  detail::put_u16le(out, 16);
  out += "data";
  detail::put_u32le(out, 2 * n);
  for (float s : sig.samples) {
    const double c = std::clamp(static_cast<double>(s), -1.0, 32767.0 / 32768.0);
    detail::put_u16le(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32768.0))));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Resampling and framing.

inline void validate_signal(const AudioSignal& sig) {
  if (sig.samples.empty()) throw DataError("empty audio signal");
  if (sig.sample_rate != 8000 && sig.sample_rate != 16000)
    throw DataError(detail::concat("unsupported sample rate ", sig.sample_rate,
                                   " (expected 8000 or 16000)"));
}

// Windowed-sinc low-pass at 3.8 kHz, then keep every other sample.
inline std::vector<double> decimate_16k_to_8k(const std::vector<float>& x) {
  constexpr int kTaps = 101;
  constexpr double kCutoff = 3800.0 / 16000.0;  // cycles per sample
  std::vector<double> h(kTaps);
  double sum = 0.0;
  for (int k = 0; k < kTaps; ++k) {
    const double m = k - (kTaps - 1) / 2.0;
    const double sinc = m == 0.0 ? 2.0 * kCutoff
                                 : std::sin(2.0 * std::numbers::pi * kCutoff * m) /
                                       (std::numbers::pi * m);
    const double win = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * k / (kTaps - 1));
    h[k] = sinc * win;
    sum += h[k];
  }
  for (double& v : h) v /= sum;

  const auto n = static_cast<long>(x.size());
  std::vector<double> y((x.size() + 1) / 2);
  for (long m = 0; m < static_cast<long>(y.size()); ++m) {
    double acc = 0.0;
    for (int k = 0; k < kTaps; ++k) {
      const long idx = 2 * m + (kTaps - 1) / 2 - k;
      if (idx >= 0 && idx < n) acc += h[k] * x[idx];
    }
    y[m] = acc;
  }
  return y;
}

inline std::vector<double> to_8k(const AudioSignal& sig) {
  validate_signal(sig);
  if (sig.sample_rate == 16000) return decimate_16k_to_8k(sig.samples);
  return {sig.samples.begin(), sig.samples.end()};
}

inline int frame_length_samples(const FrontendConfig& c) {
  return static_cast<int>(std::lround(c.frame_length_s * 8000.0));
}
inline int frame_shift_samples(const FrontendConfig& c) {
  return static_cast<int>(std::lround(c.frame_shift_s * 8000.0));
}

inline Eigen::Index num_frames(std::size_t num_samples, const FrontendConfig& c) {
  const auto len = static_cast<std::size_t>(frame_length_samples(c));
  if (num_samples < len) return 0;
  return static_cast<Eigen::Index>((num_samples - len) / frame_shift_samples(c) + 1);
}

namespace detail {

inline int fft_size_for(int n) {
  int s = 1;
  while (s < n) s <<= 1;
  return s;
}

// Per-frame state shared by both cepstral front-ends: the raw log-energy and
// the one-sided power spectrum of the pre-emphasized Hamming-windowed frame.
struct FramePower {
  double log_energy;
  std::vector<double> power;
};

class Framer {
 public:
  Framer(const std::vector<double>& x, const FrontendConfig& c)
      : x_(x), c_(c), len_(frame_length_samples(c)), shift_(frame_shift_samples(c)),
        nfft_(fft_size_for(len_)), window_(len_), buf_(nfft_) {
    for (int i = 0; i < len_; ++i)
      window_[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (len_ - 1));
  }

  int nfft() const { return nfft_; }

  FramePower frame(Eigen::Index t) {
    const double* src = x_.data() + t * shift_;
    double mean = 0.0;
    for (int i = 0; i < len_; ++i) mean += src[i];
    mean /= len_;
    std::fill(buf_.begin(), buf_.end(), 0.0);
    double energy = 0.0;
    for (int i = 0; i < len_; ++i) {
      buf_[i] = src[i] - mean;
      energy += buf_[i] * buf_[i];
    }
    for (int i = len_ - 1; i > 0; --i) buf_[i] -= c_.preemph * buf_[i - 1];
    buf_[0] -= c_.preemph * buf_[0];
    for (int i = 0; i < len_; ++i) buf_[i] *= window_[i];
    fft_.fwd(spec_, buf_);
    FramePower fp;
    fp.log_energy = std::log(std::max(energy, c_.energy_floor));
    fp.power.resize(nfft_ / 2 + 1);
    for (int k = 0; k <= nfft_ / 2; ++k) fp.power[k] = std::norm(spec_[k]);
    return fp;
  }

 private:
  const std::vector<double>& x_;
  const FrontendConfig& c_;
  int len_, shift_, nfft_;
  std::vector<double> window_, buf_;
  std::vector<std::complex<double>> spec_;
  Eigen::FFT<double> fft_;
};

inline double hz_to_mel(double f) { return 1127.0 * std::log(1.0 + f / 700.0); }
inline double hz_to_bark(double f) { return 6.0 * std::asinh(f / 600.0); }

// Triangular filters equally spaced on the mel scale; rows are filters,
// columns FFT bins.
inline Matrix mel_filterbank(const FrontendConfig& c, int nfft) {
  const int nbins = nfft / 2 + 1;
  Matrix fb = Matrix::Zero(c.num_mel_bins, nbins);
  const double lo = hz_to_mel(c.low_freq), hi = hz_to_mel(c.high_freq);
  const double delta = (hi - lo) / (c.num_mel_bins + 1);
  for (int m = 0; m < c.num_mel_bins; ++m) {
    const double left = lo + m * delta, center = left + delta, right = center + delta;
    for (int k = 0; k < nbins; ++k) {
      const double mel = hz_to_mel(k * 8000.0 / nfft);
      if (mel > left && mel < right)
        fb(m, k) = mel <= center ? (mel - left) / (center - left) : (right - mel) / (right - center);
    }
  }
  return fb;
}

// Critical-band masking curves on the Bark scale, pre-multiplied by the
// equal-loudness weight at each band centre.
inline Matrix bark_filterbank(const FrontendConfig& c, int nfft) {
  const int nbins = nfft / 2 + 1;
  Matrix fb = Matrix::Zero(c.num_bark_bins, nbins);
  const double lo = hz_to_bark(c.low_freq), hi = hz_to_bark(c.high_freq);
  const double delta = (hi - lo) / (c.num_bark_bins + 1);
  for (int j = 0; j < c.num_bark_bins; ++j) {
    const double center = lo + (j + 1) * delta;
    const double fc = 600.0 * std::sinh(center / 6.0);
    const double w2 = std::pow(2.0 * std::numbers::pi * fc, 2);
    const double eql = (w2 + 56.8e6) * w2 * w2 / (std::pow(w2 + 6.3e6, 2) * (w2 + 0.38e9));
    for (int k = 0; k < nbins; ++k) {
      const double z = hz_to_bark(k * 8000.0 / nfft) - center;
      double v = 0.0;
      if (z >= -1.3 && z < -0.5) v = std::pow(10.0, 2.5 * (z + 0.5));
      else if (z >= -0.5 && z <= 0.5) v = 1.0;
      else if (z > 0.5 && z <= 2.5) v = std::pow(10.0, -(z - 0.5));
      fb(j, k) = v * eql;
    }
  }
  return fb;
}

// Levinson-Durbin on autocorrelation r[0..p]; returns a[1..p] of
// A(z) = 1 + sum a_k z^-k.
inline std::vector<double> levinson(const std::vector<double>& r, int order) {
  std::vector<double> a(order + 1, 0.0), tmp(order + 1);
  a[0] = 1.0;
  double err = r[0];
  if (err <= 0.0) return std::vector<double>(order, 0.0);
  for (int i = 1; i <= order; ++i) {
    double acc = r[i];
    for (int j = 1; j < i; ++j) acc += a[j] * r[i - j];
    const double k = -acc / err;
    tmp = a;
    for (int j = 1; j < i; ++j) a[j] = tmp[j] + k * tmp[i - j];
    a[i] = k;
    err *= (1.0 - k * k);
    if (err <= 0.0) break;
  }
  return {a.begin() + 1, a.end()};
}

// Cepstrum c_1..c_n of the all-pole model 1/A(z).
inline std::vector<double> lpc_to_cepstrum(const std::vector<double>& a, int n) {
  const int p = static_cast<int>(a.size());
  std::vector<double> c(n + 1, 0.0);
  for (int m = 1; m <= n; ++m) {
    double acc = m <= p ? -a[m - 1] : 0.0;
    for (int k = 1; k < m; ++k)
      if (m - k <= p) acc -= (static_cast<double>(k) / m) * c[k] * a[m - k - 1];
    c[m] = acc;
  }
  return {c.begin() + 1, c.end()};
}

inline std::vector<double> prepare_samples(const AudioSignal& sig, const FrontendConfig& c,
                                           Eigen::Index* frames) {
  std::vector<double> x = to_8k(sig);
  *frames = num_frames(x.size(), c);
  if (*frames < 1) throw DataError("utterance too short");
  return x;
}

}  // namespace detail

inline FeatureMatrix compute_mfcc(const AudioSignal& signal, const FrontendConfig& config = {}) {
  Eigen::Index frames = 0;
  const std::vector<double> x = detail::prepare_samples(signal, config, &frames);
  detail::Framer framer(x, config);
  const Matrix fb = detail::mel_filterbank(config, framer.nfft());
  const int nm = config.num_mel_bins;

  // Orthonormal DCT-II rows 1..num_ceps.
  Matrix dct(config.num_ceps, nm);
  for (int k = 1; k <= config.num_ceps; ++k)
    for (int m = 0; m < nm; ++m)
      dct(k - 1, m) = std::sqrt(2.0 / nm) * std::cos(std::numbers::pi * k * (m + 0.5) / nm);

  FeatureMatrix out;
  out.kind = FeatureKind::kMfcc;
  out.frame_period = config.frame_shift_s;
  out.energy_index = 0;
  out.data.resize(frames, config.num_ceps + 1);
  for (Eigen::Index t = 0; t < frames; ++t) {
    const auto fp = framer.frame(t);
    const Eigen::Map<const Vector> power(fp.power.data(), static_cast<Eigen::Index>(fp.power.size()));
    Vector logmel = (fb * power).array().max(config.energy_floor).log().matrix();
    out.data(t, 0) = fp.log_energy;
    out.data.row(t).tail(config.num_ceps) = (dct * logmel).transpose();
  }
  return out;
}

inline FeatureMatrix compute_plp(const AudioSignal& signal, const FrontendConfig& config = {}) {
  Eigen::Index frames = 0;
  const std::vector<double> x = detail::prepare_samples(signal, config, &frames);
  detail::Framer framer(x, config);
  const Matrix fb = detail::bark_filterbank(config, framer.nfft());
  const int nb = config.num_bark_bins;
  const int p = config.lpc_order;

  // Inverse DFT of the even auditory spectrum, extended by duplicating the
  // edge bands, gives the autocorrelation of the all-pole model.
  const int m_pts = nb + 2;
  Matrix idft(p + 1, m_pts);
  for (int k = 0; k <= p; ++k)
    for (int j = 0; j < m_pts; ++j) {
      const double w = (j == 0 || j == m_pts - 1) ? 0.5 : 1.0;
      idft(k, j) = w * std::cos(std::numbers::pi * k * j / (m_pts - 1)) / (m_pts - 1);
    }

  FeatureMatrix out;
  out.kind = FeatureKind::kPlp;
  out.frame_period = config.frame_shift_s;
  out.energy_index = 0;
  out.data.resize(frames, config.num_ceps + 1);
  Vector aud(m_pts);
  for (Eigen::Index t = 0; t < frames; ++t) {
    const auto fp = framer.frame(t);
    const Eigen::Map<const Vector> power(fp.power.data(), static_cast<Eigen::Index>(fp.power.size()));
    Vector bands = (fb * power).array().max(config.energy_floor).pow(1.0 / 3.0).matrix();
    aud(0) = bands(0);
    aud.segment(1, nb) = bands;
    aud(m_pts - 1) = bands(nb - 1);
    const Vector r = idft * aud;
    const auto a = detail::levinson(std::vector<double>(r.data(), r.data() + r.size()), p);
    const auto cep = detail::lpc_to_cepstrum(a, config.num_ceps);
    out.data(t, 0) = fp.log_energy;
    for (int k = 0; k < config.num_ceps; ++k) out.data(t, k + 1) = cep[k];
  }
  return out;
}

inline FeatureMatrix compute_features(const AudioSignal& s, FeatureKind kind,
                                      const FrontendConfig& c = {}) {
  return kind == FeatureKind::kMfcc ? compute_mfcc(s, c) : compute_plp(s, c);
}

// ---------------------------------------------------------------------------
// Post-processing.

namespace detail {
// Regression deltas over +-2 frames with edge replication.
inline Matrix regression_deltas(const Matrix& x) {
  const Eigen::Index t_max = x.rows();
  Matrix d = Matrix::Zero(x.rows(), x.cols());
  constexpr int kWin = 2;
  constexpr double kDenom = 2.0 * (1 * 1 + 2 * 2);
  for (Eigen::Index t = 0; t < t_max; ++t) {
    for (int n = 1; n <= kWin; ++n) {
      const Eigen::Index fwd = std::min<Eigen::Index>(t + n, t_max - 1);
      const Eigen::Index bwd = std::max<Eigen::Index>(t - n, 0);
      d.row(t) += n * (x.row(fwd) - x.row(bwd));
    }
  }
  return d / kDenom;
}
}  // namespace detail

inline FeatureMatrix append_deltas(const FeatureMatrix& feats) {
  if (feats.num_frames() < 1) throw DataError("append_deltas: empty feature matrix");
  const Matrix d1 = detail::regression_deltas(feats.data);
  const Matrix d2 = detail::regression_deltas(d1);
  FeatureMatrix out = feats;
  const Eigen::Index dim = feats.dim();
  out.data.resize(feats.num_frames(), 3 * dim);
  out.data << feats.data, d1, d2;
  return out;
}

// Window bounds [begin, end) of the sliding CMN window centred on frame t.
// The window keeps its full width when it fits inside the utterance and is
// shifted inwards near the edges; short utterances use every frame.
inline std::pair<Eigen::Index, Eigen::Index> cmn_window_bounds(Eigen::Index t, Eigen::Index num_frames,
                                                               Eigen::Index width) {
  if (width >= num_frames) return {0, num_frames};
  Eigen::Index begin = std::max<Eigen::Index>(0, t - width / 2);
  Eigen::Index end = begin + width;
  if (end > num_frames) {
    end = num_frames;
    begin = end - width;
  }
  return {begin, end};
}

inline Eigen::Index cmn_window_frames(double window_s, double frame_period) {
  return static_cast<Eigen::Index>(std::lround(window_s / frame_period)) + 1;
}

inline FeatureMatrix apply_cmn(const FeatureMatrix& feats, double window_s = 3.0) {
  if (!(window_s > 0.0)) throw UsageError("apply_cmn: window must be positive");
  const Eigen::Index t_max = feats.num_frames();
  const Eigen::Index width = cmn_window_frames(window_s, feats.frame_period);
  Matrix prefix = Matrix::Zero(t_max + 1, feats.dim());
  for (Eigen::Index t = 0; t < t_max; ++t) prefix.row(t + 1) = prefix.row(t) + feats.data.row(t);

  FeatureMatrix out = feats;
  for (Eigen::Index t = 0; t < t_max; ++t) {
    const auto [b, e] = cmn_window_bounds(t, t_max, width);
    const RowVector mean = (prefix.row(e) - prefix.row(b)) / static_cast<double>(e - b);
    for (Eigen::Index d = 0; d < feats.dim(); ++d)
      if (d != feats.energy_index) out.data(t, d) = feats.data(t, d) - mean(d);
  }
  return out;
}

// Majority vote over a centred window; windows are truncated at the edges
// and the majority is taken over the frames actually available.
inline VadMask vad_consensus(const VadMask& raw, int window = 11) {
  const auto n = static_cast<long>(raw.size());
  const long half = window / 2;
  VadMask out(raw.size(), false);
  for (long t = 0; t < n; ++t) {
    const long b = std::max(0L, t - half), e = std::min(n, t + half + 1);
    long votes = 0;
    for (long i = b; i < e; ++i) votes += raw[i] ? 1 : 0;
    out[t] = 2 * votes > (e - b);
  }
  return out;
}

inline VadMask compute_vad(const FeatureMatrix& feats, const VadConfig& config = {}) {
  if (feats.energy_index < 0 || feats.energy_index >= feats.dim())
    throw DataError("compute_vad: feature matrix has no energy column");
  const Vector e = feats.data.col(feats.energy_index);
  const double mean = e.mean();
  const double var = (e.array() - mean).square().mean();
  const double threshold = mean + config.offset_scale * std::sqrt(var);
  VadMask raw(static_cast<std::size_t>(e.size()));
  for (Eigen::Index t = 0; t < e.size(); ++t) raw[t] = e(t) > threshold;
  return vad_consensus(raw, config.window);
}

inline FeatureMatrix select_voiced(const FeatureMatrix& feats, const VadMask& mask) {
  if (static_cast<Eigen::Index>(mask.size()) != feats.num_frames())
    throw DataError(detail::concat("select_voiced: mask length ", mask.size(),
                                   " != frame count ", feats.num_frames()));
  const auto kept = static_cast<Eigen::Index>(std::count(mask.begin(), mask.end(), true));
  if (kept == 0) throw DataError("no speech frames");
  FeatureMatrix out = feats;
  out.data.resize(kept, feats.dim());
  Eigen::Index r = 0;
  for (Eigen::Index t = 0; t < feats.num_frames(); ++t)
    if (mask[t]) out.data.row(r++) = feats.data.row(t);
  return out;
}

// Full per-utterance chain used by the pipeline: cepstra + log-energy,
// deltas, sliding CMN.
inline FeatureMatrix extract_features(const AudioSignal& s, FeatureKind kind,
                                      const FrontendConfig& c = {}) {
  return apply_cmn(append_deltas(compute_features(s, kind, c)), c.cmn_window_s);
}

}  // namespace spkv
