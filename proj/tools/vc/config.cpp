#include "config.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "vcgan/error.hpp"

namespace vc {

using Json = nlohmann::json;
using vcgan::Error;
using vcgan::ErrorCode;

std::string to_json(const RunConfig& c) {
  Json j;
  j["mel"] = {{"sample_rate", c.mel.sample_rate}, {"n_fft", c.mel.n_fft},   {"hop_length", c.mel.hop_length},
              {"n_mels", c.mel.n_mels},           {"fmin", c.mel.fmin},     {"fmax", c.mel.fmax},
              {"griffin_lim_iters", c.mel.griffin_lim_iters}};
  j["silence"] = {{"threshold_db", c.silence.threshold_db}, {"frame_seconds", c.silence.frame_seconds}};
  j["arch"] = Json::parse(vcgan::nets::arch_to_json(c.arch));
  j["train"] = Json::parse(vcgan::training::train_config_to_json(c.train));
  j["sid"] = {{"window", c.sid.window}, {"stride", c.sid.stride},         {"channels", c.sid.channels},
              {"steps", c.sid.steps},   {"batch_size", c.sid.batch_size}, {"lr", c.sid.lr},
              {"seed", c.sid.seed}};
  j["data"] = {{"layout", c.layout == vcgan::data::DatasetLayout::kSpeakerDirectories ? "speaker_dirs" : "prefix"},
               {"held_out", c.held_out},
               {"stats_max_files", c.stats_max_files}};
  j["seed"] = c.seed;
  return j.dump(2);
}

RunConfig overlay_json(const std::string& text, RunConfig c) {
  try {
    const Json j = Json::parse(text);
    if (!j.is_object()) throw Error(ErrorCode::kUnsupportedFormat, "config must be a JSON object");
    for (const auto& [key, _] : j.items()) {
      if (key != "mel" && key != "silence" && key != "arch" && key != "train" && key != "sid" && key != "data" &&
          key != "seed") {
        throw Error(ErrorCode::kUnsupportedFormat, "unknown config section '" + key + "'");
      }
    }
    if (j.contains("mel")) {
      const auto& m = j["mel"];
      c.mel.sample_rate = m.value("sample_rate", c.mel.sample_rate);
      c.mel.n_fft = m.value("n_fft", c.mel.n_fft);
      c.mel.hop_length = m.value("hop_length", c.mel.hop_length);
      c.mel.n_mels = m.value("n_mels", c.mel.n_mels);
      c.mel.fmin = m.value("fmin", c.mel.fmin);
      c.mel.fmax = m.value("fmax", c.mel.fmax);
      c.mel.griffin_lim_iters = m.value("griffin_lim_iters", c.mel.griffin_lim_iters);
    }
    if (j.contains("silence")) {
      c.silence.threshold_db = j["silence"].value("threshold_db", c.silence.threshold_db);
      c.silence.frame_seconds = j["silence"].value("frame_seconds", c.silence.frame_seconds);
    }
    if (j.contains("arch")) {
      // arch_from_json starts from defaults; merge so a partial section only
      // changes what it names.
      Json merged = Json::parse(vcgan::nets::arch_to_json(c.arch));
      merged.update(j["arch"]);
      c.arch = vcgan::nets::arch_from_json(merged.dump());
    }
    if (j.contains("train")) c.train = vcgan::training::train_config_from_json(j["train"].dump(), c.train);
    if (j.contains("sid")) {
      const auto& s = j["sid"];
      c.sid.window = s.value("window", c.sid.window);
      c.sid.stride = s.value("stride", c.sid.stride);
      c.sid.channels = s.value("channels", c.sid.channels);
      c.sid.steps = s.value("steps", c.sid.steps);
      c.sid.batch_size = s.value("batch_size", c.sid.batch_size);
      c.sid.lr = s.value("lr", c.sid.lr);
      c.sid.seed = s.value("seed", c.sid.seed);
    }
    if (j.contains("data")) {
      const auto& d = j["data"];
      if (d.contains("layout")) {
        const auto layout = d["layout"].get<std::string>();
        if (layout == "speaker_dirs") {
          c.layout = vcgan::data::DatasetLayout::kSpeakerDirectories;
        } else if (layout == "prefix") {
          c.layout = vcgan::data::DatasetLayout::kFilenamePrefix;
        } else {
          throw Error(ErrorCode::kUnsupportedFormat, "data.layout must be speaker_dirs or prefix");
        }
      }
      c.held_out = d.value("held_out", c.held_out);
      c.stats_max_files = d.value("stats_max_files", c.stats_max_files);
    }
    if (j.contains("seed")) apply_seed(c, j["seed"].get<std::uint64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kUnsupportedFormat, std::string("config: ") + e.what());
  }
  return c;
}

RunConfig load_config_file(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kFileNotFound, "config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return overlay_json(ss.str(), std::move(base));
}

void apply_seed(RunConfig& c, std::uint64_t seed) {
  c.seed = seed;
  c.train.seed = seed;
  c.sid.seed = seed;
}

}  // namespace vc
