#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vcgan/dataset/registry.hpp"

namespace vcgan::data {

struct UtteranceRecord {
  std::string speaker_id;
  std::string audio_path;
  std::optional<std::string> cache_path;
  double duration = 0.0;  // seconds, > 0

  bool operator==(const UtteranceRecord&) const = default;
};

enum class DatasetLayout {
  // root/<speaker>/.../*.wav (nested chapter directories allowed)
  kSpeakerDirectories,
  // root/<speaker>_<anything>.wav
  kFilenamePrefix,
};

struct RejectedFile {
  std::string path;
  std::string reason;
};

struct Manifest {
  SpeakerRegistry registry;
  std::vector<UtteranceRecord> records;  // sorted by (speaker, path)
  // Unreadable or empty audio files, reported instead of aborting the scan.
  std::vector<RejectedFile> rejected;
};

// Scans every root. A speaker id seen under two roots is a DuplicateSpeakerId;
// no readable audio at all is an EmptyDataset.
Manifest build_manifest(std::span<const std::filesystem::path> roots, DatasetLayout layout);
Manifest build_manifest(const std::filesystem::path& root, DatasetLayout layout);

// One JSON object per line: speaker_id, path, duration, cache_path.
void save_manifest(const std::filesystem::path& path, std::span<const UtteranceRecord> records);
std::vector<UtteranceRecord> load_manifest(const std::filesystem::path& path);

std::vector<const UtteranceRecord*> records_of(std::span<const UtteranceRecord> records, const std::string& speaker_id);

}  // namespace vcgan::data
