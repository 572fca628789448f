#include "vcgan/dataset/sampler.hpp"

#include "vcgan/error.hpp"

namespace vcgan::data {

TrainingCorpus::TrainingCorpus(const SpeakerRegistry& registry, std::vector<SpeakerData> speakers, int window)
    : registry_(registry), window_(window) {
  const int n = registry.n_in_dataset();
  if (n < 2) throw Error(ErrorCode::kInsufficientSpeakers, "need at least 2 in-dataset speakers, have " + std::to_string(n));
  if (static_cast<int>(speakers.size()) != n) {
    throw Error(ErrorCode::kInvalidArgument, "speaker data count does not match the registry");
  }
  scaled_.resize(n);
  stats_.reserve(n);
  for (int i = 0; i < n; ++i) {
    SpeakerData& s = speakers[i];
    for (const auto& u : s.utterances) {
      if (u.frames < window) {
        ++skipped_;
        continue;
      }
      scaled_[i].push_back(dsp::scale(u, s.stats));
    }
    if (scaled_[i].empty()) {
      throw Error(ErrorCode::kWindowTooShort,
                  "speaker " + registry.id_at(i) + " has no utterance of at least " + std::to_string(window) + " frames");
    }
    stats_.push_back(std::move(s.stats));
  }
}

namespace {

dsp::ScaledMel random_window(const std::vector<dsp::ScaledMel>& utterances, int window, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick_utt(0, utterances.size() - 1);
  const dsp::ScaledMel& u = utterances[pick_utt(rng)];
  std::uniform_int_distribution<int> pick_start(0, u.frames - window);
  dsp::ScaledMel out;
  static_cast<dsp::MelMatrix&>(out) = u.crop(pick_start(rng), window);
  out.speaker_stats_id = u.speaker_stats_id;
  return out;
}

}  // namespace

TrainingPair sample_training_pair(const TrainingCorpus& corpus, Rng& rng) {
  const int n = corpus.n_speakers();
  std::uniform_int_distribution<int> pick_j(0, n - 1);
  std::uniform_int_distribution<int> pick_k(0, n - 2);
  TrainingPair p;
  p.source_index = pick_j(rng);
  const int k = pick_k(rng);
  p.target_index = k >= p.source_index ? k + 1 : k;
  p.source_window = random_window(corpus.utterances(p.source_index), corpus.window(), rng);
  p.target_window = random_window(corpus.utterances(p.target_index), corpus.window(), rng);
  return p;
}

std::vector<TrainingPair> sample_batch(const TrainingCorpus& corpus, Rng& rng, int batch_size) {
  if (batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch_size must be positive");
  std::vector<TrainingPair> batch;
  batch.reserve(batch_size);
  for (int i = 0; i < batch_size; ++i) batch.push_back(sample_training_pair(corpus, rng));
  return batch;
}

Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

}  // namespace vcgan::data
