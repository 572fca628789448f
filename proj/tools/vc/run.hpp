#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "vcgan/dataset/sampler.hpp"
#include "vcgan/dsp/mel.hpp"
#include "vcgan/dsp/scaling.hpp"

namespace vc {

namespace fs = std::filesystem;

// Layout of a run directory.
struct RunPaths {
  fs::path root;

  fs::path config() const { return root / "run_config.json"; }
  fs::path manifest() const { return root / "manifest.jsonl"; }
  fs::path registry() const { return root / "registry.json"; }
  fs::path speaker_info() const { return root / "speaker_info.json"; }
  fs::path stats(const std::string& id) const { return root / "stats" / (id + ".json"); }
  fs::path cache(const std::string& id, const fs::path& audio) const;
  fs::path checkpoints() const { return root / "checkpoints"; }
  fs::path history() const { return root / "loss_history.jsonl"; }
  fs::path loss_curve() const { return root / "loss_curve.svg"; }
  fs::path embedding(const fs::path& checkpoint, const std::string& id) const;
  fs::path sid() const { return root / "sid.json"; }
  fs::path reports() const { return root / "reports"; }
};

// Advisory exclusive lock on <run>/.vc.lock, held for the object's lifetime.
// Throws IoError when another process holds it.
class RunLock {
 public:
  explicit RunLock(const fs::path& run_dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  int fd_ = -1;
};

std::optional<fs::path> latest_checkpoint(const RunPaths& run);

// Cached log-mels of one speaker in manifest order. Throws FileNotFound
// with a hint to run preprocess when a cache is missing.
std::vector<vcgan::dsp::LogMel> load_speaker_mels(const RunPaths& run, const std::vector<vcgan::data::UtteranceRecord>& records,
                                                  const std::string& id, const vcgan::dsp::MelConfig& mel);

vcgan::dsp::SpeakerScalingStats load_speaker_stats(const RunPaths& run, const std::string& id);

vcgan::data::TrainingCorpus load_corpus(const RunPaths& run, const RunConfig& config);

// id -> 'M' / 'F' / '?'.
std::map<std::string, char> load_speaker_genders(const RunPaths& run);

}  // namespace vc
