#include "vcgan/convert/convert.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>

#include "vcgan/error.hpp"

namespace vcgan::convert {

namespace {

void accumulate(nn::Tensor<float>& acc, const nn::Tensor<float>& x) {
  if (acc.empty()) {
    acc = nn::Tensor<float>(x.shape);
  }
  for (std::size_t i = 0; i < x.numel(); ++i) acc.data[i] += x.data[i];
}

void divide(nn::Tensor<float>& t, double n) {
  for (float& v : t.data) v = static_cast<float>(v / n);
}

// Frames [begin, begin + width) of `m`, reflected past either edge.
dsp::MelMatrix reflected_crop(const dsp::MelMatrix& m, int begin, int width) {
  dsp::MelMatrix out(m.n_mels, width);
  for (int t = 0; t < width; ++t) {
    const int src = nets::reflect_index(begin + t, m.frames);
    for (int b = 0; b < m.n_mels; ++b) out.at(b, t) = m.at(b, src);
  }
  return out;
}

}  // namespace

dsp::LogMel prepare_utterance(const std::filesystem::path& path, const dsp::MelConfig& mel,
                              const dsp::SilenceConfig& silence) {
  const auto wav = dsp::clip_silence(dsp::load_audio(path, mel), mel.sample_rate, silence);
  return dsp::mel_spectrogram(wav, mel);
}

nets::SpeakerEmbedding extract_embedding(const nets::ModelParams<float>& params, std::span<const dsp::LogMel> utterances,
                                         const dsp::SpeakerScalingStats& stats, int stride) {
  if (stride < 1) throw Error(ErrorCode::kInvalidArgument, "embedding stride must be positive");
  const int w = params.arch.window;
  nets::SpeakerEmbedding sum;
  int count = 0;
  for (const dsp::LogMel& utt : utterances) {
    if (utt.frames < w) continue;
    const dsp::ScaledMel scaled = dsp::scale(utt, stats);
    for (int start = 0; start + w <= utt.frames; start += stride) {
      const auto e = nets::fe_forward(params, scaled.crop(start, w));
      accumulate(sum.values, e.values);
      accumulate(sum.f3_summary, e.f3_summary);
      accumulate(sum.f4_summary, e.f4_summary);
      ++count;
    }
  }
  if (count == 0) {
    throw Error(ErrorCode::kNoValidWindows,
                "no utterance holds a full " + std::to_string(w) + "-frame window for the embedding");
  }
  divide(sum.values, count);
  divide(sum.f3_summary, count);
  divide(sum.f4_summary, count);
  return sum;
}

TargetReference reference_from_samples(const nets::ModelParams<float>& params,
                                       const std::vector<std::filesystem::path>& samples, const dsp::MelConfig& mel,
                                       const dsp::SilenceConfig& silence, std::string speaker_id) {
  if (samples.empty()) throw Error(ErrorCode::kNoValidWindows, "no target samples given");
  std::vector<dsp::LogMel> mels;
  mels.reserve(samples.size());
  for (const auto& path : samples) mels.push_back(prepare_utterance(path, mel, silence));
  TargetReference ref;
  ref.stats = dsp::compute_scaling_stats(mels, dsp::kDefaultPercentile, std::move(speaker_id));
  for (const auto& path : samples) ref.stats.source_files.push_back(path.string());
  ref.embedding = extract_embedding(params, mels, ref.stats);
  return ref;
}

ConvertedMel convert_mel(const nets::ModelParams<float>& params, const dsp::LogMel& source,
                         const dsp::SpeakerScalingStats& source_stats, const TargetReference& target,
                         const ConvertOptions& options) {
  const int w = params.arch.window;
  const int frames = source.frames;
  if (frames < 1) throw Error(ErrorCode::kNoValidWindows, "empty source utterance");
  if (frames < w && !options.pad_short) {
    throw Error(ErrorCode::kNoValidWindows, "source has " + std::to_string(frames) + " frames, fewer than one " +
                                                std::to_string(w) + "-frame window");
  }
  const dsp::ScaledMel scaled = dsp::scale(source, source_stats);
  const int bins = scaled.n_mels;

  std::vector<double> acc(static_cast<std::size_t>(bins) * frames, 0.0);
  std::vector<double> weight(frames, 0.0);
  const int hop = options.overlap_add ? w / 2 : w;
  for (int start = 0; start < frames; start += hop) {
    const auto out = nets::gen_forward(params, reflected_crop(scaled, start, w), target.embedding);
    for (int t = 0; t < w && start + t < frames; ++t) {
      // Triangular cross-fade; every frame is covered by at least one window
      // with positive weight.
      const double g = options.overlap_add ? std::min(t + 1, w - t) : 1.0;
      weight[start + t] += g;
      for (int b = 0; b < bins; ++b) acc[static_cast<std::size_t>(b) * frames + start + t] += g * out.at(b, t);
    }
    if (options.overlap_add && start + w >= frames) break;
  }

  ConvertedMel result;
  result.scaled.n_mels = bins;
  result.scaled.frames = frames;
  result.scaled.values.resize(acc.size());
  result.scaled.speaker_stats_id = target.stats.speaker_id;
  for (int b = 0; b < bins; ++b) {
    for (int t = 0; t < frames; ++t) {
      const std::size_t i = static_cast<std::size_t>(b) * frames + t;
      result.scaled.values[i] = static_cast<float>(acc[i] / weight[t]);
    }
  }
  result.log_mel = dsp::unscale(result.scaled, target.stats);
  result.log_mel.config = source.config;
  return result;
}

ConversionResult convert_waveform(const nets::ModelParams<float>& params, const dsp::Waveform& source,
                                  const dsp::SpeakerScalingStats& source_stats, const TargetReference& target,
                                  const dsp::MelConfig& mel, const ConvertOptions& options) {
  ConversionResult r;
  r.source_mel = dsp::mel_spectrogram(dsp::clip_silence(source, mel.sample_rate, options.silence), mel);
  r.converted = convert_mel(params, r.source_mel, source_stats, target, options);
  r.audio = dsp::mel_to_audio(r.converted.log_mel, mel);
  return r;
}

ConversionResult convert_utterance(const nets::ModelParams<float>& params, const std::filesystem::path& source,
                                   const dsp::SpeakerScalingStats& source_stats, const TargetReference& target,
                                   const dsp::MelConfig& mel, const ConvertOptions& options) {
  return convert_waveform(params, dsp::load_audio(source, mel), source_stats, target, mel, options);
}

void save_embedding(const std::filesystem::path& path, const nets::SpeakerEmbedding& e) {
  auto pack = [](const nn::Tensor<float>& t) {
    return nlohmann::json{{"shape", {t.shape.n, t.shape.c, t.shape.h, t.shape.w}}, {"values", t.data}};
  };
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << nlohmann::json{{"values", pack(e.values)}, {"f3_summary", pack(e.f3_summary)}, {"f4_summary", pack(e.f4_summary)}}
             .dump()
      << '\n';
}

nets::SpeakerEmbedding load_embedding(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kFileNotFound, path.string());
  auto unpack = [](const nlohmann::json& j) {
    const auto d = j.at("shape").get<std::array<int, 4>>();
    return nn::Tensor<float>(nn::Shape{d[0], d[1], d[2], d[3]}, j.at("values").get<std::vector<float>>());
  };
  try {
    const auto j = nlohmann::json::parse(in);
    return {unpack(j.at("values")), unpack(j.at("f3_summary")), unpack(j.at("f4_summary"))};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kUnsupportedFormat, path.string() + ": " + e.what());
  }
}

double embedding_cosine(const nets::SpeakerEmbedding& a, const nets::SpeakerEmbedding& b) {
  if (a.values.shape != b.values.shape) throw Error(ErrorCode::kShapeMismatch, "embedding shapes differ");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.values.numel(); ++i) {
    dot += static_cast<double>(a.values.data[i]) * b.values.data[i];
    na += static_cast<double>(a.values.data[i]) * a.values.data[i];
    nb += static_cast<double>(b.values.data[i]) * b.values.data[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

}  // namespace vcgan::convert
