#pragma once

#include <vector>

namespace vcgan::dsp {

// Log-magnitude mel analysis settings. Values are natural-log magnitudes with
// an additive floor of kLogFloor.
struct MelConfig {
  int sample_rate = 16000;
  int n_fft = 512;
  int hop_length = 32;
  int n_mels = 128;
  double fmin = 40.0;
  double fmax = 7900.0;
  int griffin_lim_iters = 60;

  int n_freq() const { return n_fft / 2 + 1; }

  // Throws InvalidArgument when an invariant is violated.
  void validate() const;

  bool operator==(const MelConfig&) const = default;
};

inline constexpr double kLogFloor = 1e-10;

using Waveform = std::vector<float>;

}  // namespace vcgan::dsp
