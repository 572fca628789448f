#pragma once

#include <string>
#include <vector>

#include "vcgan/dsp/mel_config.hpp"

namespace vcgan::dsp {

// Row-major [n_mels x frames] matrix of mel values.
struct MelMatrix {
  int n_mels = 0;
  int frames = 0;
  std::vector<float> values;

  MelMatrix() = default;
  MelMatrix(int bins, int t, float fill = 0.0f)
      : n_mels(bins), frames(t), values(static_cast<std::size_t>(bins) * t, fill) {}

  float& at(int bin, int t) { return values[static_cast<std::size_t>(bin) * frames + t]; }
  float at(int bin, int t) const { return values[static_cast<std::size_t>(bin) * frames + t]; }

  // Frames [begin, begin + length). Throws InvalidArgument when out of range.
  MelMatrix crop(int begin, int length) const;
};

// Natural-log mel magnitudes (log(mel + kLogFloor)).
struct LogMel : MelMatrix {
  MelConfig config;
};

// Per-bin clipped and affinely mapped to [-1, +1].
struct ScaledMel : MelMatrix {
  std::string speaker_stats_id;
};

// Linear STFT magnitudes, row-major [n_freq x frames].
struct LinearMagnitude {
  int n_freq = 0;
  int frames = 0;
  std::vector<double> values;
};

// Slaney-style mel filterbank with area normalization, row-major
// [n_mels x n_freq].
std::vector<double> mel_filterbank(const MelConfig& config);

// Centered (zero padded by n_fft/2), periodic-Hann STFT magnitudes.
// frames = 1 + len / hop_length.
LinearMagnitude stft_magnitude(const Waveform& waveform, const MelConfig& config);

LogMel mel_spectrogram(const Waveform& waveform, const MelConfig& config);

// exp(log-mel) through the non-negative-clamped filterbank pseudo-inverse.
LinearMagnitude mel_to_linear(const MelMatrix& log_mel, const MelConfig& config);

// Classic Griffin-Lim from seeded random initial phase. Output length is
// (frames - 1) * hop_length.
Waveform griffin_lim(const LinearMagnitude& magnitude, const MelConfig& config, int iterations);

Waveform mel_to_audio(const MelMatrix& log_mel, const MelConfig& config);

// ||stft_magnitude(waveform)| - target||_F / ||target||_F over the common frames.
double spectral_distance(const LinearMagnitude& target, const Waveform& waveform, const MelConfig& config);

}  // namespace vcgan::dsp
