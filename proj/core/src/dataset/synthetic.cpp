#include "vcgan/dataset/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "vcgan/dsp/audio.hpp"

namespace vcgan::data {

std::vector<SyntheticSpeaker> synthetic_speakers(int count, std::uint64_t seed) {
  static const SyntheticSpeaker kBase[] = {
      {"spk00", 110.0, {600.0, 1200.0, 2600.0}, {90.0, 120.0, 180.0}, 1.0, 'M'},
      {"spk01", 150.0, {400.0, 1900.0, 2900.0}, {80.0, 140.0, 200.0}, 0.6, 'M'},
      {"spk02", 215.0, {800.0, 1400.0, 3200.0}, {100.0, 130.0, 200.0}, 0.8, 'F'},
      {"spk03", 275.0, {500.0, 2300.0, 3600.0}, {90.0, 150.0, 220.0}, 0.4, 'F'},
      {"spk04", 180.0, {700.0, 1700.0, 3000.0}, {90.0, 130.0, 200.0}, 0.7, 'F'},
  };
  std::vector<SyntheticSpeaker> out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < count; ++i) {
    if (i < static_cast<int>(std::size(kBase))) {
      out.push_back(kBase[i]);
      continue;
    }
    SyntheticSpeaker s;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "spk%02d", i);
    s.id = buf;
    s.f0 = 95.0 + 200.0 * u(rng);
    s.formants = {350.0 + 500.0 * u(rng), 1100.0 + 1200.0 * u(rng), 2400.0 + 1200.0 * u(rng)};
    s.tilt = 0.3 + 0.8 * u(rng);
    s.gender = s.f0 < 165.0 ? 'M' : 'F';
    out.push_back(s);
  }
  return out;
}

dsp::Waveform synthesize_utterance(const SyntheticSpeaker& spk, int sample_rate, double seconds, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  const auto n = static_cast<std::size_t>(seconds * sample_rate);

  // Piecewise syllable plan: per-sample pitch multiplier and loudness.
  std::vector<double> pitch(n, 1.0), loud(n, 0.0);
  std::size_t pos = static_cast<std::size_t>(0.01 * sample_rate);
  while (pos < n) {
    const auto len = static_cast<std::size_t>((0.12 + 0.13 * u(rng)) * sample_rate);
    const double p0 = 0.88 + 0.24 * u(rng);
    const double p1 = 0.88 + 0.24 * u(rng);
    const double gain = 0.55 + 0.45 * u(rng);
    for (std::size_t i = 0; i < len && pos + i < n; ++i) {
      const double x = static_cast<double>(i) / len;
      pitch[pos + i] = p0 + (p1 - p0) * x;
      loud[pos + i] = gain * std::sin(std::numbers::pi * x);
    }
    pos += len + static_cast<std::size_t>((0.02 + 0.03 * u(rng)) * sample_rate);
  }

  auto envelope = [&spk](double f) {
    double e = 0.08;
    for (int i = 0; i < 3; ++i) {
      const double d = (f - spk.formants[i]) / spk.bandwidths[i];
      e += 1.0 / (1.0 + d * d);
    }
    return e * std::pow(1.0 + f / 1000.0, -spk.tilt);
  };

  const double nyquist_guard = std::min(7600.0, 0.475 * sample_rate);
  const int max_harm = static_cast<int>(nyquist_guard / (spk.f0 * 0.85));
  std::vector<double> phase(max_harm + 1, 0.0);
  for (int h = 1; h <= max_harm; ++h) phase[h] = 2.0 * std::numbers::pi * u(rng);
  const double vibrato_rate = 4.0 + 2.0 * u(rng);

  dsp::Waveform out(n);
  double peak = 0.0;
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double f0 = spk.f0 * pitch[i] * (1.0 + 0.01 * std::sin(2.0 * std::numbers::pi * vibrato_rate * t));
    double acc = 0.0;
    if (loud[i] > 0.0) {
      for (int h = 1; h <= max_harm; ++h) {
        const double fh = h * f0;
        if (fh >= nyquist_guard) break;
        phase[h] += 2.0 * std::numbers::pi * fh / sample_rate;
        acc += envelope(fh) * std::sin(phase[h]);
      }
    }
    y[i] = loud[i] * acc + 1e-4 * noise(rng);
    peak = std::max(peak, std::abs(y[i]));
  }
  const double g = peak > 0.0 ? 0.6 / peak : 1.0;
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(y[i] * g);
  return out;
}

std::vector<std::filesystem::path> write_synthetic_corpus(const std::filesystem::path& root,
                                                          const std::vector<SyntheticSpeaker>& speakers,
                                                          int utterances_per_speaker, double seconds,
                                                          int sample_rate, std::uint64_t seed) {
  std::vector<std::filesystem::path> written;
  for (std::size_t s = 0; s < speakers.size(); ++s) {
    const auto dir = root / speakers[s].id;
    std::filesystem::create_directories(dir);
    for (int k = 0; k < utterances_per_speaker; ++k) {
      const std::uint64_t utt_seed = seed * 1000003ULL + s * 1009ULL + static_cast<std::uint64_t>(k);
      const auto wav = synthesize_utterance(speakers[s], sample_rate, seconds, utt_seed);
      char name[64];
      std::snprintf(name, sizeof(name), "%s_%03d.wav", speakers[s].id.c_str(), k);
      dsp::write_wav(dir / name, wav, sample_rate);
      written.push_back(dir / name);
    }
  }
  return written;
}

}  // namespace vcgan::data
