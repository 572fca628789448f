#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "vcgan/nets/model.hpp"
#include "vcgan/nn/adam.hpp"

namespace vcgan::nets {

struct Checkpoint {
  ModelParams<float> params;
  nn::AdamState<float> adam_fe;
  nn::AdamState<float> adam_gen;
  nn::AdamState<float> adam_disc;
  std::int64_t step = 0;
  // Text form of the training RNG (operator<< of std::mt19937_64).
  std::string rng_state;
  // Free-form JSON object, e.g. the resolved training config.
  std::string meta = "{}";
};

// Layout: "VCCK", u32 version, u64 header length, JSON header, then every
// array as little-endian float32 in header order.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

// Throws FileNotFound or UnsupportedFormat.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// As above, plus CheckpointMismatch when the stored arch or speaker count
// differ from the expected ones.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ArchConfig& arch, int n_speakers);

// "ckpt_<step>.bin"
std::string checkpoint_name(std::int64_t step);

}  // namespace vcgan::nets
