#include "run.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "vcgan/dsp/mel_cache.hpp"
#include "vcgan/error.hpp"

namespace vc {

using vcgan::Error;
using vcgan::ErrorCode;

fs::path RunPaths::cache(const std::string& id, const fs::path& audio) const {
  // Speaker directories may nest chapters, so the stem alone can collide;
  // fold the parent directory name in.
  return root / "cache" / id / (audio.parent_path().filename().string() + "__" + audio.stem().string() + ".melc");
}

fs::path RunPaths::embedding(const fs::path& checkpoint, const std::string& id) const {
  return root / "embeddings" / checkpoint.stem() / (id + ".json");
}

RunLock::RunLock(const fs::path& run_dir) {
  fs::create_directories(run_dir);
  const auto path = run_dir / ".vc.lock";
  fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
  if (fd_ < 0) throw Error(ErrorCode::kIoError, "cannot open " + path.string() + ": " + std::strerror(errno));
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw Error(ErrorCode::kIoError, "run directory " + run_dir.string() + " is in use by another vc process");
  }
}

RunLock::~RunLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

std::optional<fs::path> latest_checkpoint(const RunPaths& run) {
  if (!fs::exists(run.checkpoints())) return std::nullopt;
  std::optional<fs::path> best;
  long long best_step = -1;
  for (const auto& e : fs::directory_iterator(run.checkpoints())) {
    const auto name = e.path().filename().string();
    if (name.rfind("ckpt_", 0) != 0 || e.path().extension() != ".bin") continue;
    try {
      const long long step = std::stoll(name.substr(5, name.size() - 9));
      if (step > best_step) {
        best_step = step;
        best = e.path();
      }
    } catch (const std::exception&) {
    }
  }
  return best;
}

std::vector<vcgan::dsp::LogMel> load_speaker_mels(const RunPaths& run,
                                                  const std::vector<vcgan::data::UtteranceRecord>& records,
                                                  const std::string& id, const vcgan::dsp::MelConfig& mel) {
  std::vector<vcgan::dsp::LogMel> out;
  for (const auto& r : records) {
    if (r.speaker_id != id) continue;
    const fs::path cache = r.cache_path ? fs::path(*r.cache_path) : run.cache(id, r.audio_path);
    if (!fs::exists(cache)) {
      throw Error(ErrorCode::kFileNotFound,
                  "missing spectrogram cache " + cache.string() + "; run `vc preprocess` for this run directory first");
    }
    vcgan::dsp::LogMel m;
    static_cast<vcgan::dsp::MelMatrix&>(m) = vcgan::dsp::read_mel_cache(cache);
    m.config = mel;
    out.push_back(std::move(m));
  }
  return out;
}

vcgan::dsp::SpeakerScalingStats load_speaker_stats(const RunPaths& run, const std::string& id) {
  const auto path = run.stats(id);
  if (!fs::exists(path)) {
    throw Error(ErrorCode::kFileNotFound,
                "missing scaling stats " + path.string() + "; run `vc preprocess` for this run directory first");
  }
  return vcgan::dsp::load_stats(path);
}

vcgan::data::TrainingCorpus load_corpus(const RunPaths& run, const RunConfig& config) {
  if (!fs::exists(run.registry()) || !fs::exists(run.manifest())) {
    throw Error(ErrorCode::kFileNotFound,
                "no preprocessed data in " + run.root.string() + "; run `vc preprocess --data DIR --out RUN` first");
  }
  const auto registry = vcgan::data::load_registry(run.registry());
  const auto records = vcgan::data::load_manifest(run.manifest());
  std::vector<vcgan::data::SpeakerData> speakers;
  for (const auto& id : registry.training_ids()) {
    speakers.push_back({load_speaker_stats(run, id), {}});
    for (auto& m : load_speaker_mels(run, records, id, config.mel)) speakers.back().utterances.push_back(std::move(m));
  }
  return vcgan::data::TrainingCorpus(registry, std::move(speakers), config.arch.window);
}

std::map<std::string, char> load_speaker_genders(const RunPaths& run) {
  std::map<std::string, char> out;
  std::ifstream in(run.speaker_info());
  if (!in) return out;
  try {
    const auto j = nlohmann::json::parse(in);
    for (const auto& [id, info] : j.items()) {
      const auto g = info.value("gender", std::string("?"));
      out[id] = g.empty() ? '?' : g[0];
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kUnsupportedFormat, run.speaker_info().string() + ": " + e.what());
  }
  return out;
}

}  // namespace vc
