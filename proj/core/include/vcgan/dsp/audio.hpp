#pragma once

#include <filesystem>

#include "vcgan/dsp/mel_config.hpp"

namespace vcgan::dsp {

struct WavData {
  int sample_rate = 0;
  int channels = 0;
  // Interleaved samples in [-1, 1].
  std::vector<float> samples;
};

// Reads integer PCM (8/16/24/32 bit, including WAVE_FORMAT_EXTENSIBLE/PCM).
// Throws FileNotFound or UnsupportedFormat.
WavData read_wav(const std::filesystem::path& path);

// Writes mono 16-bit PCM; samples are clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, const Waveform& samples, int sample_rate);

// Band-limited (windowed-sinc) rate conversion. Output length is
// round(len * to_rate / from_rate).
Waveform resample(const Waveform& input, int from_rate, int to_rate);

// Mono waveform at config.sample_rate.
Waveform load_audio(const std::filesystem::path& path, const MelConfig& config);

struct SilenceConfig {
  double threshold_db = 40.0;
  double frame_seconds = 0.025;
};

// Drops every frame whose RMS is more than threshold_db below the loudest
// frame's RMS. Throws AllSilent when nothing is left.
Waveform clip_silence(const Waveform& waveform, int sample_rate, const SilenceConfig& config = {});

}  // namespace vcgan::dsp
