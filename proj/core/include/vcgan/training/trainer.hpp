#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vcgan/dataset/sampler.hpp"
#include "vcgan/nets/checkpoint.hpp"
#include "vcgan/training/losses.hpp"

namespace vcgan::training {

struct TrainConfig {
  double lambda_cycle = 10.0;
  double lr_d = 2e-4;
  double lr_g = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int batch_size = 1;
  std::int64_t total_steps = 1000;
  std::int64_t checkpoint_interval = 100;
  std::uint64_t seed = 0;
  double patch_power = nets::kDefaultPatchPower;
  // Consecutive non-finite steps tolerated before train() gives up.
  int max_retries = 3;

  // Throws InvalidArgument.
  void validate() const;
};

std::string train_config_to_json(const TrainConfig& config);
// Keys missing from `text` keep the values of `base`.
TrainConfig train_config_from_json(const std::string& text, TrainConfig base = {});

struct LossReport {
  std::int64_t step = 0;
  double loss_d = 0.0;
  double loss_g_adv = 0.0;
  double loss_cycle = 0.0;
  double loss_g_total = 0.0;
  // False when no patch of the step reached the power threshold.
  bool d_updated = false;
  bool adv_used = false;
  double wall_ms = 0.0;
};

// Everything that evolves during training.
struct TrainState {
  nets::ModelParams<float> params;
  nn::AdamState<float> adam_fe;
  nn::AdamState<float> adam_gen;
  nn::AdamState<float> adam_disc;
  std::int64_t step = 0;
  data::Rng rng;
};

TrainState initial_state(const nets::ArchConfig& arch, int n_speakers, std::uint64_t seed);

nets::Checkpoint to_checkpoint(const TrainState& state, const std::string& meta = "{}");
TrainState from_checkpoint(const nets::Checkpoint& ckpt);

// One discriminator update followed by one FE/G update; advances state.step.
// Crops are drawn from state.rng. On a non-finite loss or gradient the
// parameters and optimizer moments are left as they were and NonFiniteLoss is
// thrown.
LossReport training_step(TrainState& state, const std::vector<data::TrainingPair>& batch, const TrainConfig& config);

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path history;
  std::int64_t steps_run = 0;
  std::int64_t retries = 0;
};

// Runs until config.total_steps. Writes run_dir/checkpoints/ckpt_<step>.bin
// every checkpoint_interval steps and at the end, and appends one JSON line
// per step to run_dir/loss_history.jsonl. With `resume`, the history is cut
// back to the checkpoint's step first.
TrainResult train(const data::TrainingCorpus& corpus, const nets::ArchConfig& arch, const TrainConfig& config,
                  const std::filesystem::path& run_dir, const std::optional<std::filesystem::path>& resume = {},
                  const std::function<void(const LossReport&)>& on_step = {});

std::vector<LossReport> read_loss_history(const std::filesystem::path& path);

}  // namespace vcgan::training
