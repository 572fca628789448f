#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vcgan/dsp/mel.hpp"
#include "vcgan/nn/params.hpp"

namespace vcgan::eval {

// Stand-in speaker identifier: a small convolutional softmax classifier over
// globally normalized log-mel windows.
struct SidConfig {
  int window = 64;
  int stride = 32;  // between scoring windows
  std::vector<int> channels{8, 16, 32};
  int steps = 400;
  int batch_size = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct SidModel {
  std::vector<std::string> speakers;
  SidConfig config;
  int n_mels = 0;
  double mean = 0.0;
  double stddev = 1.0;
  nn::ParamStore<float> params;
  // Window-level top-1 on the held-back half, in percent.
  double eval_top1 = 0.0;

  int n_speakers() const { return static_cast<int>(speakers.size()); }
  // Throws UnknownTarget.
  int index_of(const std::string& id) const;
};

// Utterances per speaker; `train` and `eval` must be disjoint.
struct SidDataset {
  std::vector<std::string> speakers;
  std::vector<std::vector<dsp::LogMel>> train;
  std::vector<std::vector<dsp::LogMel>> eval;
};

// Alternating split of each speaker's utterances (even positions train, odd
// positions eval).
SidDataset split_alternating(const std::vector<std::string>& speakers,
                             const std::vector<std::vector<dsp::LogMel>>& utterances);

// Throws InsufficientData when fewer than two speakers are given or a speaker
// lacks utterances in either half.
SidModel train_sid(const SidDataset& data, const SidConfig& config = {});

// Per-speaker utterance score: mean log-probability over windows at
// config.stride (one reflection-padded window for short inputs). Length M.
std::vector<double> sid_scores(const SidModel& model, const dsp::MelMatrix& log_mel);

// 1-based position of `target` after sorting scores in descending order;
// equal scores rank by ascending speaker index. Throws UnknownTarget.
int rank_from_scores(std::span<const double> scores, int target);

int rank_target(const SidModel& model, const dsp::MelMatrix& log_mel, const std::string& target_id);

// Window-level top-1 accuracy (percent) over labelled utterances.
double sid_window_accuracy(const SidModel& model, const std::vector<std::vector<dsp::LogMel>>& utterances);

void save_sid(const std::filesystem::path& path, const SidModel& model);
SidModel load_sid(const std::filesystem::path& path);

}  // namespace vcgan::eval
