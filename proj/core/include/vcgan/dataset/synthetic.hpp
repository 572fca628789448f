#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vcgan/dsp/mel_config.hpp"

namespace vcgan::data {

// A toy "voice": a harmonic stack on a speaker-specific pitch, shaped by a
// fixed formant envelope and spectral tilt. Utterances differ in syllable
// timing, pitch inflection and loudness contour.
struct SyntheticSpeaker {
  std::string id;
  double f0 = 120.0;
  std::array<double, 3> formants{500.0, 1500.0, 2500.0};
  std::array<double, 3> bandwidths{90.0, 120.0, 180.0};
  double tilt = 0.8;
  char gender = 'M';
};

// Five hand-picked, well-separated profiles, then seeded random ones.
std::vector<SyntheticSpeaker> synthetic_speakers(int count, std::uint64_t seed = 7);

dsp::Waveform synthesize_utterance(const SyntheticSpeaker& speaker, int sample_rate, double seconds, std::uint64_t seed);

// Writes root/<id>/<id>_<k>.wav for every speaker; returns the file paths.
std::vector<std::filesystem::path> write_synthetic_corpus(const std::filesystem::path& root,
                                                          const std::vector<SyntheticSpeaker>& speakers,
                                                          int utterances_per_speaker, double seconds,
                                                          int sample_rate, std::uint64_t seed);

}  // namespace vcgan::data
