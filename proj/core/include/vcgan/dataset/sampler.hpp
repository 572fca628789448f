#pragma once

#include <random>
#include <vector>

#include "vcgan/dataset/registry.hpp"
#include "vcgan/dsp/scaling.hpp"

namespace vcgan::data {

using Rng = std::mt19937_64;

inline constexpr int kWindowFrames = 64;

struct TrainingPair {
  dsp::ScaledMel source_window;
  int source_index = -1;
  dsp::ScaledMel target_window;
  int target_index = -1;
};

// Cached spectrograms and stats of one in-dataset speaker.
struct SpeakerData {
  dsp::SpeakerScalingStats stats;
  std::vector<dsp::MelMatrix> utterances;  // log-mel
};

// Scaled utterances per training index, restricted to utterances that can
// hold a full window.
class TrainingCorpus {
 public:
  // `speakers[i]` belongs to training index i of `registry`. Throws
  // InsufficientSpeakers (< 2 speakers), WindowTooShort (a speaker without
  // any utterance of >= window frames) or DimensionMismatch.
  TrainingCorpus(const SpeakerRegistry& registry, std::vector<SpeakerData> speakers, int window = kWindowFrames);

  int n_speakers() const { return static_cast<int>(scaled_.size()); }
  int window() const { return window_; }
  const SpeakerRegistry& registry() const { return registry_; }
  const std::vector<dsp::ScaledMel>& utterances(int index) const { return scaled_.at(index); }
  const dsp::SpeakerScalingStats& stats(int index) const { return stats_.at(index); }
  // Utterances dropped for being shorter than the window.
  int skipped() const { return skipped_; }

 private:
  SpeakerRegistry registry_;
  int window_;
  int skipped_ = 0;
  std::vector<std::vector<dsp::ScaledMel>> scaled_;
  std::vector<dsp::SpeakerScalingStats> stats_;
};

// Uniform j, then uniform k != j; uniform utterance and uniform crop for each.
TrainingPair sample_training_pair(const TrainingCorpus& corpus, Rng& rng);

std::vector<TrainingPair> sample_batch(const TrainingCorpus& corpus, Rng& rng, int batch_size);

// Independent stream for worker `stream` of a run seeded with `seed`.
Rng make_stream(std::uint64_t seed, std::uint64_t stream);

}  // namespace vcgan::data
