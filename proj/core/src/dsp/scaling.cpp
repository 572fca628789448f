#include "vcgan/dsp/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "vcgan/error.hpp"

namespace vcgan::dsp {

SpeakerScalingStats compute_scaling_stats(std::span<const LogMel> mels, double percentile, std::string speaker_id) {
  if (mels.empty()) throw Error(ErrorCode::kEmptyCollection, "no spectrograms for scaling stats");
  if (!(percentile > 0.0 && percentile <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "percentile must be in (0, 1]");
  const int n_mels = mels.front().n_mels;
  std::size_t total = 0;
  for (const auto& m : mels) {
    if (m.n_mels != n_mels) throw Error(ErrorCode::kDimensionMismatch, "spectrograms disagree on n_mels");
    total += static_cast<std::size_t>(m.frames);
  }
  if (total == 0) throw Error(ErrorCode::kEmptyCollection, "spectrograms have no frames");

  // The small slack keeps p * n from rounding up past an exact integer rank.
  const auto rank = static_cast<std::size_t>(std::ceil(percentile * static_cast<double>(total) - 1e-9));
  const std::size_t index = std::clamp<std::size_t>(rank, 1, total) - 1;

  SpeakerScalingStats stats;
  stats.speaker_id = std::move(speaker_id);
  stats.percentile = percentile;
  stats.per_bin_max.resize(n_mels);
  stats.per_bin_min.resize(n_mels);
  std::vector<float> pooled(total);
  for (int b = 0; b < n_mels; ++b) {
    std::size_t off = 0;
    for (const auto& m : mels) {
      std::copy_n(m.values.begin() + static_cast<std::size_t>(b) * m.frames, m.frames, pooled.begin() + off);
      off += static_cast<std::size_t>(m.frames);
    }
    std::nth_element(pooled.begin(), pooled.begin() + index, pooled.end());
    stats.per_bin_max[b] = pooled[index];
    stats.per_bin_min[b] = pooled[index] - kScalingRange;
  }
  return stats;
}

ScaledMel scale(const MelMatrix& mel, const SpeakerScalingStats& stats) {
  if (mel.n_mels != stats.n_mels()) throw Error(ErrorCode::kDimensionMismatch, "scale: n_mels differs from stats");
  ScaledMel out;
  static_cast<MelMatrix&>(out) = MelMatrix(mel.n_mels, mel.frames);
  out.speaker_stats_id = stats.speaker_id;
  for (int b = 0; b < mel.n_mels; ++b) {
    const double lo = stats.per_bin_min[b];
    const double hi = stats.per_bin_max[b];
    for (int t = 0; t < mel.frames; ++t) {
      const double v = std::clamp(static_cast<double>(mel.at(b, t)), lo, hi);
      out.at(b, t) = static_cast<float>(std::clamp(2.0 * (v - lo) / (hi - lo) - 1.0, -1.0, 1.0));
    }
  }
  return out;
}

LogMel unscale(const MelMatrix& scaled, const SpeakerScalingStats& stats) {
  if (scaled.n_mels != stats.n_mels()) throw Error(ErrorCode::kDimensionMismatch, "unscale: n_mels differs from stats");
  LogMel out;
  static_cast<MelMatrix&>(out) = MelMatrix(scaled.n_mels, scaled.frames);
  out.config.n_mels = scaled.n_mels;
  for (int b = 0; b < scaled.n_mels; ++b) {
    const double lo = stats.per_bin_min[b];
    const double hi = stats.per_bin_max[b];
    for (int t = 0; t < scaled.frames; ++t) {
      out.at(b, t) = static_cast<float>(lo + (static_cast<double>(scaled.at(b, t)) + 1.0) * 0.5 * (hi - lo));
    }
  }
  return out;
}

std::vector<std::string> choose_stats_subset(const std::vector<std::string>& files, std::size_t max_files,
                                             std::uint64_t seed) {
  std::vector<std::size_t> order(files.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  const std::size_t take = std::min(max_files, files.size());
  // Partial Fisher-Yates: the first `take` slots are a uniform sample.
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  std::vector<std::string> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(files[order[i]]);
  return out;
}

void save_stats(const std::filesystem::path& path, const SpeakerScalingStats& stats) {
  nlohmann::json j;
  j["speaker_id"] = stats.speaker_id;
  j["percentile"] = stats.percentile;
  j["per_bin_max"] = stats.per_bin_max;
  j["per_bin_min"] = stats.per_bin_min;
  j["subset_files"] = stats.source_files;
  j["seed"] = stats.seed;
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  os << j.dump(2) << '\n';
}

SpeakerScalingStats load_stats(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::kFileNotFound, path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kUnsupportedFormat, path.string() + ": " + e.what());
  }
  SpeakerScalingStats s;
  s.speaker_id = j.value("speaker_id", std::string{});
  s.percentile = j.value("percentile", kDefaultPercentile);
  s.per_bin_max = j.at("per_bin_max").get<std::vector<float>>();
  s.per_bin_min.resize(s.per_bin_max.size());
  // min is derived, never trusted from disk
  for (std::size_t b = 0; b < s.per_bin_max.size(); ++b) s.per_bin_min[b] = s.per_bin_max[b] - kScalingRange;
  s.source_files = j.value("subset_files", std::vector<std::string>{});
  s.seed = j.value("seed", std::uint64_t{0});
  return s;
}

}  // namespace vcgan::dsp
