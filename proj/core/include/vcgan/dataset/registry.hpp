#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace vcgan::data {

struct SpeakerEntry {
  std::string id;
  // Training index in [0, N) for in-dataset speakers, -1 otherwise.
  int index = -1;
  bool in_dataset = true;

  bool operator==(const SpeakerEntry&) const = default;
};

// Ordered speaker list. Training indices are a permutation of 0..N-1 over the
// in-dataset speakers and follow sorted id order.
class SpeakerRegistry {
 public:
  SpeakerRegistry() = default;

  // Every id becomes an in-dataset speaker; indices follow sorted order.
  // Throws DuplicateSpeakerId.
  static SpeakerRegistry from_ids(std::vector<std::string> ids);

  const std::vector<SpeakerEntry>& speakers() const { return speakers_; }
  int n_in_dataset() const;
  bool contains(const std::string& id) const;
  const SpeakerEntry& entry(const std::string& id) const;
  // Training index of `id`; throws UnknownSpeaker if absent or held out.
  int index_of(const std::string& id) const;
  const std::string& id_at(int index) const;

  // In-dataset ids ordered by training index.
  std::vector<std::string> training_ids() const;

  bool operator==(const SpeakerRegistry&) const = default;

 private:
  friend SpeakerRegistry registry_from_entries(std::vector<SpeakerEntry> entries);
  std::vector<SpeakerEntry> speakers_;
};

// Validates uniqueness and the index permutation. Throws DuplicateSpeakerId or
// InvalidArgument.
SpeakerRegistry registry_from_entries(std::vector<SpeakerEntry> entries);

struct RegistrySplit {
  // All speakers; held-out ones flagged in_dataset = false, the rest
  // reindexed 0..N'-1.
  SpeakerRegistry train;
  // Only the held-out speakers, none carrying a training index.
  SpeakerRegistry held_out;
};

// Throws UnknownSpeaker when a held-out id is not registered.
RegistrySplit split_held_out(const SpeakerRegistry& registry, const std::vector<std::string>& held_out_ids);

void save_registry(const std::filesystem::path& path, const SpeakerRegistry& registry);
SpeakerRegistry load_registry(const std::filesystem::path& path);

}  // namespace vcgan::data
