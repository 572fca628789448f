#include "vcgan/dsp/mel.hpp"

#include <fftw3.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <tuple>

#include "vcgan/error.hpp"

namespace vcgan::dsp {
namespace {

// FFTW planning is not thread-safe; execution is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    std::lock_guard lock(planner_mutex());
    time_ = fftw_alloc_real(n);
    freq_ = fftw_alloc_complex(n / 2 + 1);
    forward_ = fftw_plan_dft_r2c_1d(n, time_, freq_, FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_1d(n, freq_, time_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
    fftw_free(time_);
    fftw_free(freq_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* time() { return time_; }
  std::complex<double>* freq() { return reinterpret_cast<std::complex<double>*>(freq_); }
  void forward() { fftw_execute(forward_); }
  // Unnormalized; caller divides by n.
  void inverse() { fftw_execute(inverse_); }
  int size() const { return n_; }

 private:
  int n_;
  double* time_;
  fftw_complex* freq_;
  fftw_plan forward_;
  fftw_plan inverse_;
};

std::vector<double> hann(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

// [frames x n_freq]
using ComplexSpec = std::vector<std::complex<double>>;

ComplexSpec stft_complex(const std::vector<double>& x, const MelConfig& cfg, int& frames_out) {
  const int n_fft = cfg.n_fft;
  const int hop = cfg.hop_length;
  const int pad = n_fft / 2;
  const int n_freq = cfg.n_freq();
  const int frames = 1 + static_cast<int>(x.size()) / hop;
  const auto window = hann(n_fft);
  RealFft fft(n_fft);
  ComplexSpec spec(static_cast<std::size_t>(frames) * n_freq);
  for (int t = 0; t < frames; ++t) {
    const long start = static_cast<long>(t) * hop - pad;
    for (int i = 0; i < n_fft; ++i) {
      const long k = start + i;
      fft.time()[i] = (k >= 0 && k < static_cast<long>(x.size())) ? x[k] * window[i] : 0.0;
    }
    fft.forward();
    std::copy(fft.freq(), fft.freq() + n_freq, spec.begin() + static_cast<std::size_t>(t) * n_freq);
  }
  frames_out = frames;
  return spec;
}

std::vector<double> istft(const ComplexSpec& spec, int frames, const MelConfig& cfg) {
  const int n_fft = cfg.n_fft;
  const int hop = cfg.hop_length;
  const int pad = n_fft / 2;
  const int n_freq = cfg.n_freq();
  const auto window = hann(n_fft);
  const std::size_t full = static_cast<std::size_t>(n_fft) + static_cast<std::size_t>(hop) * (frames - 1);
  std::vector<double> y(full, 0.0), wsum(full, 0.0);
  RealFft fft(n_fft);
  for (int t = 0; t < frames; ++t) {
    std::copy(spec.begin() + static_cast<std::size_t>(t) * n_freq,
              spec.begin() + static_cast<std::size_t>(t + 1) * n_freq, fft.freq());
    fft.inverse();
    const std::size_t start = static_cast<std::size_t>(t) * hop;
    for (int i = 0; i < n_fft; ++i) {
      y[start + i] += fft.time()[i] / n_fft * window[i];
      wsum[start + i] += window[i] * window[i];
    }
  }
  const std::size_t length = static_cast<std::size_t>(hop) * (frames - 1);
  std::vector<double> out(length);
  for (std::size_t i = 0; i < length; ++i) {
    const double w = wsum[i + pad];
    out[i] = w > 1e-8 ? y[i + pad] / w : y[i + pad];
  }
  return out;
}

double hz_to_mel(double f) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  constexpr double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  return f < min_log_hz ? f / f_sp : min_log_mel + std::log(f / min_log_hz) / logstep;
}

double mel_to_hz(double m) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  constexpr double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  return m < min_log_mel ? f_sp * m : min_log_hz * std::exp(logstep * (m - min_log_mel));
}

using FbKey = std::tuple<int, int, int, double, double>;

FbKey key_of(const MelConfig& c) { return {c.sample_rate, c.n_fft, c.n_mels, c.fmin, c.fmax}; }

const Eigen::MatrixXd& cached_pinv(const MelConfig& cfg) {
  static std::mutex m;
  static std::map<FbKey, Eigen::MatrixXd> cache;
  std::lock_guard lock(m);
  auto it = cache.find(key_of(cfg));
  if (it != cache.end()) return it->second;
  const auto fb = mel_filterbank(cfg);
  Eigen::MatrixXd w(cfg.n_mels, cfg.n_freq());
  for (int b = 0; b < cfg.n_mels; ++b)
    for (int f = 0; f < cfg.n_freq(); ++f) w(b, f) = fb[static_cast<std::size_t>(b) * cfg.n_freq() + f];
  Eigen::MatrixXd pinv = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(w).pseudoInverse();
  return cache.emplace(key_of(cfg), std::move(pinv)).first->second;
}

}  // namespace

MelMatrix MelMatrix::crop(int begin, int length) const {
  if (begin < 0 || length < 0 || begin + length > frames) {
    throw Error(ErrorCode::kInvalidArgument, "crop outside the mel matrix");
  }
  MelMatrix out(n_mels, length);
  for (int b = 0; b < n_mels; ++b)
    std::copy_n(values.begin() + static_cast<std::size_t>(b) * frames + begin, length,
                out.values.begin() + static_cast<std::size_t>(b) * length);
  return out;
}

std::vector<double> mel_filterbank(const MelConfig& cfg) {
  cfg.validate();
  const int n_freq = cfg.n_freq();
  std::vector<double> fft_freqs(n_freq);
  for (int f = 0; f < n_freq; ++f) fft_freqs[f] = f * (cfg.sample_rate / 2.0) / (n_freq - 1);
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax);
  std::vector<double> mel_f(cfg.n_mels + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i) {
    mel_f[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1));
  }
  std::vector<double> w(static_cast<std::size_t>(cfg.n_mels) * n_freq, 0.0);
  for (int b = 0; b < cfg.n_mels; ++b) {
    const double lower_w = mel_f[b + 1] - mel_f[b];
    const double upper_w = mel_f[b + 2] - mel_f[b + 1];
    const double enorm = 2.0 / (mel_f[b + 2] - mel_f[b]);
    for (int f = 0; f < n_freq; ++f) {
      const double lower = (fft_freqs[f] - mel_f[b]) / lower_w;
      const double upper = (mel_f[b + 2] - fft_freqs[f]) / upper_w;
      w[static_cast<std::size_t>(b) * n_freq + f] = std::max(0.0, std::min(lower, upper)) * enorm;
    }
  }
  return w;
}

LinearMagnitude stft_magnitude(const Waveform& waveform, const MelConfig& cfg) {
  cfg.validate();
  std::vector<double> x(waveform.begin(), waveform.end());
  int frames = 0;
  const ComplexSpec spec = stft_complex(x, cfg, frames);
  LinearMagnitude out{cfg.n_freq(), frames, std::vector<double>(static_cast<std::size_t>(cfg.n_freq()) * frames)};
  for (int t = 0; t < frames; ++t)
    for (int f = 0; f < out.n_freq; ++f)
      out.values[static_cast<std::size_t>(f) * frames + t] = std::abs(spec[static_cast<std::size_t>(t) * out.n_freq + f]);
  return out;
}

LogMel mel_spectrogram(const Waveform& waveform, const MelConfig& cfg) {
  if (waveform.empty()) throw Error(ErrorCode::kInvalidArgument, "mel_spectrogram: empty waveform");
  const LinearMagnitude mag = stft_magnitude(waveform, cfg);
  const auto fb = mel_filterbank(cfg);
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  // Owned copies: vectorized products over unaligned maps round differently
  // depending on the buffer address, which would break bit-reproducibility.
  const RowMat fbm = Eigen::Map<const RowMat>(fb.data(), cfg.n_mels, mag.n_freq);
  const RowMat mm = Eigen::Map<const RowMat>(mag.values.data(), mag.n_freq, mag.frames);
  const Eigen::MatrixXd mel = fbm * mm;
  LogMel out;
  out.n_mels = cfg.n_mels;
  out.frames = mag.frames;
  out.config = cfg;
  out.values.resize(static_cast<std::size_t>(out.n_mels) * out.frames);
  for (int b = 0; b < out.n_mels; ++b)
    for (int t = 0; t < out.frames; ++t)
      out.at(b, t) = static_cast<float>(std::log(mel(b, t) + kLogFloor));
  return out;
}

LinearMagnitude mel_to_linear(const MelMatrix& log_mel, const MelConfig& cfg) {
  cfg.validate();
  if (log_mel.n_mels != cfg.n_mels) throw Error(ErrorCode::kDimensionMismatch, "mel_to_linear: n_mels differs from config");
  const Eigen::MatrixXd& pinv = cached_pinv(cfg);
  Eigen::MatrixXd mel(log_mel.n_mels, log_mel.frames);
  for (int b = 0; b < log_mel.n_mels; ++b)
    for (int t = 0; t < log_mel.frames; ++t) mel(b, t) = std::exp(static_cast<double>(log_mel.at(b, t)));
  const Eigen::MatrixXd lin = (pinv * mel).cwiseMax(0.0);
  LinearMagnitude out{cfg.n_freq(), log_mel.frames, std::vector<double>(static_cast<std::size_t>(cfg.n_freq()) * log_mel.frames)};
  for (int f = 0; f < out.n_freq; ++f)
    for (int t = 0; t < out.frames; ++t) out.values[static_cast<std::size_t>(f) * out.frames + t] = lin(f, t);
  return out;
}

Waveform griffin_lim(const LinearMagnitude& magnitude, const MelConfig& cfg, int iterations) {
  cfg.validate();
  if (magnitude.n_freq != cfg.n_freq()) throw Error(ErrorCode::kDimensionMismatch, "griffin_lim: n_freq differs from config");
  const int frames = magnitude.frames;
  const int n_freq = magnitude.n_freq;
  auto mag = [&](int t, int f) { return magnitude.values[static_cast<std::size_t>(f) * frames + t]; };

  std::mt19937_64 rng(0x6c1a5eedULL);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  ComplexSpec spec(static_cast<std::size_t>(frames) * n_freq);
  for (int t = 0; t < frames; ++t)
    for (int f = 0; f < n_freq; ++f) spec[static_cast<std::size_t>(t) * n_freq + f] = std::polar(mag(t, f), phase(rng));

  std::vector<double> y = istft(spec, frames, cfg);
  for (int it = 0; it < iterations; ++it) {
    int got = 0;
    const ComplexSpec rebuilt = stft_complex(y, cfg, got);
    for (int t = 0; t < frames; ++t) {
      for (int f = 0; f < n_freq; ++f) {
        const std::size_t i = static_cast<std::size_t>(t) * n_freq + f;
        const std::complex<double> c = t < got ? rebuilt[i] : std::complex<double>(1.0, 0.0);
        const double a = std::abs(c);
        spec[i] = a > 1e-16 ? mag(t, f) * (c / a) : std::complex<double>(mag(t, f), 0.0);
      }
    }
    y = istft(spec, frames, cfg);
  }
  return Waveform(y.begin(), y.end());
}

Waveform mel_to_audio(const MelMatrix& log_mel, const MelConfig& cfg) {
  return griffin_lim(mel_to_linear(log_mel, cfg), cfg, cfg.griffin_lim_iters);
}

double spectral_distance(const LinearMagnitude& target, const Waveform& waveform, const MelConfig& cfg) {
  const LinearMagnitude got = stft_magnitude(waveform, cfg);
  const int frames = std::min(got.frames, target.frames);
  double num = 0.0, den = 0.0;
  for (int f = 0; f < target.n_freq; ++f) {
    for (int t = 0; t < frames; ++t) {
      const double a = target.values[static_cast<std::size_t>(f) * target.frames + t];
      const double b = got.values[static_cast<std::size_t>(f) * got.frames + t];
      num += (a - b) * (a - b);
      den += a * a;
    }
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace vcgan::dsp
