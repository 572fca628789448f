#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vcgan/dataset/manifest.hpp"
#include "vcgan/dsp/audio.hpp"
#include "vcgan/eval/sid.hpp"
#include "vcgan/nets/arch.hpp"
#include "vcgan/training/trainer.hpp"

namespace vc {

// Everything a subcommand may consult, fully resolved before it runs.
struct RunConfig {
  vcgan::dsp::MelConfig mel;
  vcgan::dsp::SilenceConfig silence;
  vcgan::nets::ArchConfig arch;
  vcgan::training::TrainConfig train;
  vcgan::eval::SidConfig sid;
  vcgan::data::DatasetLayout layout = vcgan::data::DatasetLayout::kSpeakerDirectories;
  std::vector<std::string> held_out;
  std::size_t stats_max_files = 50;
  std::uint64_t seed = 0;
};

std::string to_json(const RunConfig& config);

// Overlays the keys present in `text` on `base`. Unknown top-level sections
// are rejected so that typos do not pass silently.
RunConfig overlay_json(const std::string& text, RunConfig base);

RunConfig load_config_file(const std::filesystem::path& path, RunConfig base);

// The seed fans out to training, the SID and the stats subset choice.
void apply_seed(RunConfig& config, std::uint64_t seed);

}  // namespace vc
