#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "vcgan/dsp/audio.hpp"
#include "vcgan/dsp/scaling.hpp"
#include "vcgan/nets/model.hpp"

namespace vcgan::convert {

inline constexpr int kEmbeddingStride = 32;

// load_audio -> clip_silence -> mel_spectrogram.
dsp::LogMel prepare_utterance(const std::filesystem::path& path, const dsp::MelConfig& mel,
                              const dsp::SilenceConfig& silence = {});

// Scales every utterance with `stats`, runs FE on each full window (stride
// kEmbeddingStride) and averages the embedding and both summaries. Throws
// NoValidWindows when no utterance holds a full window.
nets::SpeakerEmbedding extract_embedding(const nets::ModelParams<float>& params, std::span<const dsp::LogMel> utterances,
                                         const dsp::SpeakerScalingStats& stats, int stride = kEmbeddingStride);

// What the generator needs about the target: its embedding and the stats that
// map generated windows back to log-mel.
struct TargetReference {
  nets::SpeakerEmbedding embedding;
  dsp::SpeakerScalingStats stats;
};

// Unseen-speaker path: stats and embedding both come from the given samples.
// No parameter is touched.
TargetReference reference_from_samples(const nets::ModelParams<float>& params,
                                       const std::vector<std::filesystem::path>& samples, const dsp::MelConfig& mel,
                                       const dsp::SilenceConfig& silence = {}, std::string speaker_id = "unseen");

struct ConvertOptions {
  // Windows at half-window stride blended with a triangular cross-fade
  // instead of back-to-back windows.
  bool overlap_add = false;
  // Reflection-pad sources shorter than one window instead of failing.
  bool pad_short = true;
  dsp::SilenceConfig silence;
};

struct ConvertedMel {
  dsp::ScaledMel scaled;  // generator output, trimmed to the source length
  dsp::LogMel log_mel;    // unscaled with the target stats
};

// Scaled source -> right reflection-pad to a whole number of windows ->
// generator per window -> trim -> unscale with the target stats. Throws
// NoValidWindows for a source shorter than one window when pad_short is off,
// or for an empty source.
ConvertedMel convert_mel(const nets::ModelParams<float>& params, const dsp::LogMel& source,
                         const dsp::SpeakerScalingStats& source_stats, const TargetReference& target,
                         const ConvertOptions& options = {});

struct ConversionResult {
  dsp::LogMel source_mel;  // silence-clipped input
  ConvertedMel converted;
  dsp::Waveform audio;
};

ConversionResult convert_waveform(const nets::ModelParams<float>& params, const dsp::Waveform& source,
                                  const dsp::SpeakerScalingStats& source_stats, const TargetReference& target,
                                  const dsp::MelConfig& mel, const ConvertOptions& options = {});

ConversionResult convert_utterance(const nets::ModelParams<float>& params, const std::filesystem::path& source,
                                   const dsp::SpeakerScalingStats& source_stats, const TargetReference& target,
                                   const dsp::MelConfig& mel, const ConvertOptions& options = {});

void save_embedding(const std::filesystem::path& path, const nets::SpeakerEmbedding& embedding);
nets::SpeakerEmbedding load_embedding(const std::filesystem::path& path);

// Cosine similarity of the flattened 1 x 8 x 8 embeddings.
double embedding_cosine(const nets::SpeakerEmbedding& a, const nets::SpeakerEmbedding& b);

}  // namespace vcgan::convert
