#include "vcgan/dataset/registry.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "vcgan/error.hpp"

namespace vcgan::data {

SpeakerRegistry registry_from_entries(std::vector<SpeakerEntry> entries) {
  std::set<std::string> seen;
  std::vector<int> indices;
  for (const auto& e : entries) {
    if (!seen.insert(e.id).second) throw Error(ErrorCode::kDuplicateSpeakerId, e.id);
    if (e.in_dataset) {
      indices.push_back(e.index);
    } else if (e.index != -1) {
      throw Error(ErrorCode::kInvalidArgument, "held-out speaker " + e.id + " carries a training index");
    }
  }
  std::sort(indices.begin(), indices.end());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] != static_cast<int>(i)) {
      throw Error(ErrorCode::kInvalidArgument, "training indices are not a permutation of 0..N-1");
    }
  }
  SpeakerRegistry r;
  r.speakers_ = std::move(entries);
  return r;
}

SpeakerRegistry SpeakerRegistry::from_ids(std::vector<std::string> ids) {
  std::sort(ids.begin(), ids.end());
  if (auto dup = std::adjacent_find(ids.begin(), ids.end()); dup != ids.end()) {
    throw Error(ErrorCode::kDuplicateSpeakerId, *dup);
  }
  std::vector<SpeakerEntry> entries;
  entries.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) entries.push_back({ids[i], static_cast<int>(i), true});
  return registry_from_entries(std::move(entries));
}

int SpeakerRegistry::n_in_dataset() const {
  return static_cast<int>(std::count_if(speakers_.begin(), speakers_.end(), [](const auto& e) { return e.in_dataset; }));
}

bool SpeakerRegistry::contains(const std::string& id) const {
  return std::any_of(speakers_.begin(), speakers_.end(), [&](const auto& e) { return e.id == id; });
}

const SpeakerEntry& SpeakerRegistry::entry(const std::string& id) const {
  for (const auto& e : speakers_)
    if (e.id == id) return e;
  throw Error(ErrorCode::kUnknownSpeaker, id);
}

int SpeakerRegistry::index_of(const std::string& id) const {
  const SpeakerEntry& e = entry(id);
  if (!e.in_dataset) throw Error(ErrorCode::kUnknownSpeaker, id + " is not an in-dataset speaker");
  return e.index;
}

const std::string& SpeakerRegistry::id_at(int index) const {
  for (const auto& e : speakers_)
    if (e.in_dataset && e.index == index) return e.id;
  throw Error(ErrorCode::kUnknownSpeaker, "no speaker with training index " + std::to_string(index));
}

std::vector<std::string> SpeakerRegistry::training_ids() const {
  std::vector<std::string> out(static_cast<std::size_t>(n_in_dataset()));
  for (const auto& e : speakers_)
    if (e.in_dataset) out[static_cast<std::size_t>(e.index)] = e.id;
  return out;
}

RegistrySplit split_held_out(const SpeakerRegistry& registry, const std::vector<std::string>& held_out_ids) {
  const std::set<std::string> held(held_out_ids.begin(), held_out_ids.end());
  for (const auto& id : held) {
    if (!registry.contains(id)) throw Error(ErrorCode::kUnknownSpeaker, id);
  }
  std::vector<const SpeakerEntry*> kept;
  for (const auto& e : registry.speakers())
    if (e.in_dataset && !held.count(e.id)) kept.push_back(&e);
  std::sort(kept.begin(), kept.end(), [](const auto* a, const auto* b) { return a->id < b->id; });

  std::vector<SpeakerEntry> train_entries;
  std::vector<SpeakerEntry> held_entries;
  for (const auto& e : registry.speakers()) {
    if (held.count(e.id) || !e.in_dataset) {
      train_entries.push_back({e.id, -1, false});
      if (held.count(e.id)) held_entries.push_back({e.id, -1, false});
      continue;
    }
    const auto pos = std::find(kept.begin(), kept.end(), &e) - kept.begin();
    train_entries.push_back({e.id, static_cast<int>(pos), true});
  }
  return {registry_from_entries(std::move(train_entries)), registry_from_entries(std::move(held_entries))};
}

void save_registry(const std::filesystem::path& path, const SpeakerRegistry& registry) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : registry.speakers()) {
    j.push_back({{"speaker_id", e.id}, {"index", e.index}, {"in_dataset", e.in_dataset}});
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  os << nlohmann::json{{"speakers", j}, {"n_speakers", registry.n_in_dataset()}}.dump(2) << '\n';
}

SpeakerRegistry load_registry(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::kFileNotFound, path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kUnsupportedFormat, path.string() + ": " + e.what());
  }
  std::vector<SpeakerEntry> entries;
  for (const auto& s : j.at("speakers")) {
    entries.push_back({s.at("speaker_id").get<std::string>(), s.at("index").get<int>(), s.at("in_dataset").get<bool>()});
  }
  return registry_from_entries(std::move(entries));
}

}  // namespace vcgan::data
