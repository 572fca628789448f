#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vcgan/dsp/mel.hpp"

namespace vcgan::dsp {

inline constexpr double kDefaultPercentile = 0.999;
inline constexpr float kScalingRange = 4.0f;

// Per-frequency clipping bounds of one speaker. per_bin_min is always
// per_bin_max - 4.
struct SpeakerScalingStats {
  std::string speaker_id;
  std::vector<float> per_bin_max;
  std::vector<float> per_bin_min;
  double percentile = kDefaultPercentile;
  // Provenance of the random subset the stats were computed from.
  std::vector<std::string> source_files;
  std::uint64_t seed = 0;

  int n_mels() const { return static_cast<int>(per_bin_max.size()); }
};

// Nearest-rank percentile of the pooled values of every bin:
// sorted[ceil(p * n) - 1]. Throws EmptyCollection / DimensionMismatch.
SpeakerScalingStats compute_scaling_stats(std::span<const LogMel> mels, double percentile = kDefaultPercentile,
                                          std::string speaker_id = {});

// Per bin: clip to [min, max], then map affinely onto [-1, +1].
ScaledMel scale(const MelMatrix& mel, const SpeakerScalingStats& stats);

// Maps [-1, +1] back onto [min, max] per bin.
LogMel unscale(const MelMatrix& scaled, const SpeakerScalingStats& stats);

// Seeded choice of min(max_files, files.size()) entries, in draw order.
std::vector<std::string> choose_stats_subset(const std::vector<std::string>& files, std::size_t max_files,
                                             std::uint64_t seed);

void save_stats(const std::filesystem::path& path, const SpeakerScalingStats& stats);
SpeakerScalingStats load_stats(const std::filesystem::path& path);

}  // namespace vcgan::dsp
