#include "vcgan/dataset/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include <json.hpp>

#include "vcgan/dsp/audio.hpp"
#include "vcgan/error.hpp"

namespace vcgan::data {
namespace fs = std::filesystem;

namespace {

bool is_wav(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".wav";
}

// speaker -> files found under one root
std::map<std::string, std::vector<fs::path>> scan_root(const fs::path& root, DatasetLayout layout) {
  std::map<std::string, std::vector<fs::path>> found;
  if (!fs::is_directory(root)) throw Error(ErrorCode::kFileNotFound, root.string());
  if (layout == DatasetLayout::kSpeakerDirectories) {
    for (const auto& dir : fs::directory_iterator(root)) {
      if (!dir.is_directory()) continue;
      const std::string id = dir.path().filename().string();
      for (const auto& f : fs::recursive_directory_iterator(dir.path())) {
        if (f.is_regular_file() && is_wav(f.path())) found[id].push_back(f.path());
      }
    }
  } else {
    for (const auto& f : fs::directory_iterator(root)) {
      if (!f.is_regular_file() || !is_wav(f.path())) continue;
      const std::string stem = f.path().stem().string();
      const auto cut = stem.find('_');
      found[cut == std::string::npos ? stem : stem.substr(0, cut)].push_back(f.path());
    }
  }
  return found;
}

}  // namespace

Manifest build_manifest(std::span<const fs::path> roots, DatasetLayout layout) {
  std::map<std::string, std::vector<fs::path>> all;
  for (const auto& root : roots) {
    for (auto& [id, files] : scan_root(root, layout)) {
      if (all.count(id)) throw Error(ErrorCode::kDuplicateSpeakerId, id + " appears under more than one root");
      all.emplace(id, std::move(files));
    }
  }

  Manifest m;
  std::vector<std::string> ids;
  for (auto& [id, files] : all) {
    std::sort(files.begin(), files.end());
    bool any = false;
    for (const auto& f : files) {
      try {
        const dsp::WavData wav = dsp::read_wav(f);
        const double duration = static_cast<double>(wav.samples.size() / wav.channels) / wav.sample_rate;
        m.records.push_back({id, f.string(), std::nullopt, duration});
        any = true;
      } catch (const Error& e) {
        m.rejected.push_back({f.string(), e.what()});
      }
    }
    if (any) ids.push_back(id);
  }
  if (m.records.empty()) throw Error(ErrorCode::kEmptyDataset, "no readable audio files found");
  m.registry = SpeakerRegistry::from_ids(std::move(ids));
  return m;
}

Manifest build_manifest(const fs::path& root, DatasetLayout layout) {
  return build_manifest(std::span<const fs::path>(&root, 1), layout);
}

void save_manifest(const fs::path& path, std::span<const UtteranceRecord> records) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  for (const auto& r : records) {
    nlohmann::json j{{"speaker_id", r.speaker_id}, {"path", r.audio_path}, {"duration", r.duration}};
    j["cache_path"] = r.cache_path ? nlohmann::json(*r.cache_path) : nlohmann::json(nullptr);
    os << j.dump() << '\n';
  }
}

std::vector<UtteranceRecord> load_manifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::kFileNotFound, path.string());
  std::vector<UtteranceRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      UtteranceRecord r;
      r.speaker_id = j.at("speaker_id").get<std::string>();
      r.audio_path = j.at("path").get<std::string>();
      r.duration = j.at("duration").get<double>();
      if (j.contains("cache_path") && !j["cache_path"].is_null()) r.cache_path = j["cache_path"].get<std::string>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kUnsupportedFormat, path.string() + ": " + e.what());
    }
  }
  return out;
}

std::vector<const UtteranceRecord*> records_of(std::span<const UtteranceRecord> records, const std::string& speaker_id) {
  std::vector<const UtteranceRecord*> out;
  for (const auto& r : records)
    if (r.speaker_id == speaker_id) out.push_back(&r);
  return out;
}

}  // namespace vcgan::data
