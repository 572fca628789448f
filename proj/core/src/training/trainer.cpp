#include "vcgan/training/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "vcgan/error.hpp"

namespace vcgan::training {

namespace {

using Json = nlohmann::json;
using nn::Var;

constexpr std::uint64_t kTrainStream = 1;

bool finite_grads(const std::map<std::string, nn::Tensor<float>>& grads) {
  for (const auto& [_, g] : grads)
    for (float v : g.data)
      if (!std::isfinite(v)) return false;
  return true;
}

[[noreturn]] void non_finite(std::int64_t step, const std::string& what, double value) {
  std::ostringstream os;
  os << "step " << step << ": " << what << " = " << value;
  throw Error(ErrorCode::kNonFiniteLoss, os.str());
}

nn::Tensor<float> stack(const std::vector<data::TrainingPair>& batch, const nets::ArchConfig& arch, bool source) {
  const int b = static_cast<int>(batch.size());
  nn::Tensor<float> t(nn::Shape{b, 1, arch.n_mels, arch.window});
  for (int i = 0; i < b; ++i) {
    const dsp::MelMatrix& m = source ? batch[i].source_window : batch[i].target_window;
    if (m.n_mels != arch.n_mels || m.frames != arch.window) {
      throw Error(ErrorCode::kShapeMismatch, "training window " + std::to_string(m.n_mels) + "x" +
                                                 std::to_string(m.frames) + " does not match the architecture");
    }
    std::copy(m.values.begin(), m.values.end(), t.sample(i).begin());
  }
  return t;
}

std::string rng_text(const data::Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Json report_json(const LossReport& r) {
  return {{"step", r.step},           {"loss_d", r.loss_d},     {"loss_g_adv", r.loss_g_adv},
          {"loss_cycle", r.loss_cycle}, {"loss_g_total", r.loss_g_total}, {"wall_ms", r.wall_ms},
          {"adv_used", r.adv_used}};
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::kInvalidArgument, "train config: " + why); };
  if (!(lambda_cycle >= 0.0)) fail("lambda_cycle must be >= 0");
  if (!(lr_d > 0.0) || !(lr_g > 0.0)) fail("learning rates must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("betas must lie in [0, 1)");
  if (batch_size < 1) fail("batch_size must be positive");
  if (total_steps < 0) fail("total_steps must be >= 0");
  if (checkpoint_interval < 1) fail("checkpoint_interval must be positive");
  if (max_retries < 0) fail("max_retries must be >= 0");
}

std::string train_config_to_json(const TrainConfig& c) {
  Json j{{"lambda_cycle", c.lambda_cycle}, {"lr_d", c.lr_d},
         {"lr_g", c.lr_g},                 {"beta1", c.beta1},
         {"beta2", c.beta2},               {"batch_size", c.batch_size},
         {"total_steps", c.total_steps},   {"checkpoint_interval", c.checkpoint_interval},
         {"seed", c.seed},                 {"patch_power", c.patch_power},
         {"max_retries", c.max_retries}};
  return j.dump();
}

TrainConfig train_config_from_json(const std::string& text, TrainConfig c) {
  try {
    const Json j = Json::parse(text);
    c.lambda_cycle = j.value("lambda_cycle", c.lambda_cycle);
    c.lr_d = j.value("lr_d", c.lr_d);
    c.lr_g = j.value("lr_g", c.lr_g);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.total_steps = j.value("total_steps", c.total_steps);
    c.checkpoint_interval = j.value("checkpoint_interval", c.checkpoint_interval);
    c.seed = j.value("seed", c.seed);
    c.patch_power = j.value("patch_power", c.patch_power);
    c.max_retries = j.value("max_retries", c.max_retries);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kUnsupportedFormat, std::string("train config: ") + e.what());
  }
  return c;
}

TrainState initial_state(const nets::ArchConfig& arch, int n_speakers, std::uint64_t seed) {
  TrainState s;
  s.params = nets::init_params(arch, n_speakers, seed);
  s.rng = data::make_stream(seed, kTrainStream);
  return s;
}

nets::Checkpoint to_checkpoint(const TrainState& s, const std::string& meta) {
  return {s.params, s.adam_fe, s.adam_gen, s.adam_disc, s.step, rng_text(s.rng), meta};
}

TrainState from_checkpoint(const nets::Checkpoint& c) {
  TrainState s;
  s.params = c.params;
  s.adam_fe = c.adam_fe;
  s.adam_gen = c.adam_gen;
  s.adam_disc = c.adam_disc;
  s.step = c.step;
  std::istringstream is(c.rng_state);
  is >> s.rng;
  if (!is) throw Error(ErrorCode::kUnsupportedFormat, "checkpoint RNG state is unreadable");
  return s;
}

LossReport training_step(TrainState& state, const std::vector<data::TrainingPair>& batch, const TrainConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  if (batch.empty()) throw Error(ErrorCode::kInvalidArgument, "empty training batch");
  const nets::ArchConfig& arch = state.params.arch;
  const int n = state.params.n_speakers;
  std::vector<int> src_idx, tgt_idx;
  for (const auto& p : batch) {
    if (p.source_index < 0 || p.source_index >= n || p.target_index < 0 || p.target_index >= n) {
      throw Error(ErrorCode::kInvalidArgument, "speaker index outside the trained set");
    }
    src_idx.push_back(p.source_index);
    tgt_idx.push_back(p.target_index);
  }
  const Var<float> source(stack(batch, arch, true));
  const Var<float> target(stack(batch, arch, false));

  std::vector<SamplePatchPlan> d_plan, g_plan;
  for (std::size_t i = 0; i < batch.size(); ++i) d_plan.push_back(plan_sample_patches(arch, state.rng));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    SamplePatchPlan p;
    p.fake = nets::plan_patches(arch.window, arch.patch_widths, state.rng);
    g_plan.push_back(std::move(p));
  }

  LossReport report;
  report.step = state.step + 1;
  const nets::ModelParams<float> params_before = state.params;
  const auto adam_before = std::make_tuple(state.adam_fe, state.adam_gen, state.adam_disc);
  auto& p = state.params;
  try {
    // Discriminator update. G and FE run frozen, so the converted windows
    // reach D as constants.
    {
      nn::ParamBinder<float> fe(p.fe, false), gen(p.gen, false), disc(p.disc, true);
      const auto fake = nets::gen_forward(arch, gen, source, nets::fe_forward(arch, fe, target));
      const DiscriminatorInputs<float> in{source, target, fake.detach(), src_idx, tgt_idx};
      auto loss = discriminator_loss(arch, n, disc, in, d_plan, config.patch_power, &report.d_updated);
      report.loss_d = loss.value().data[0];
      if (!std::isfinite(report.loss_d)) non_finite(report.step, "loss_d", report.loss_d);
      if (report.d_updated) {
        nn::backward(loss);
        const auto grads = disc.gradients();
        if (!finite_grads(grads)) non_finite(report.step, "discriminator gradient", NAN);
        nn::adam_step(p.disc, state.adam_disc, grads, {config.lr_d, config.beta1, config.beta2});
      }
    }
    // FE/G update against the freshly updated, now frozen, discriminator.
    {
      nn::ParamBinder<float> fe(p.fe, true), gen(p.gen, true), disc(p.disc, false);
      auto g = generator_losses(arch, n, fe, gen, disc, source, target, tgt_idx, g_plan, config.patch_power,
                                config.lambda_cycle);
      report.adv_used = g.adv_used;
      report.loss_g_adv = g.adv.value().data[0];
      report.loss_cycle = g.cycle.value().data[0];
      report.loss_g_total = g.total.value().data[0];
      if (!std::isfinite(report.loss_g_total)) non_finite(report.step, "loss_g_total", report.loss_g_total);
      nn::backward(g.total);
      const auto fe_grads = fe.gradients();
      const auto gen_grads = gen.gradients();
      if (!finite_grads(fe_grads) || !finite_grads(gen_grads)) non_finite(report.step, "generator gradient", NAN);
      const nn::AdamConfig adam{config.lr_g, config.beta1, config.beta2};
      nn::adam_step(p.fe, state.adam_fe, fe_grads, adam);
      nn::adam_step(p.gen, state.adam_gen, gen_grads, adam);
    }
    if (!p.all_finite()) non_finite(report.step, "parameters", NAN);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kNonFiniteLoss) {
      state.params = params_before;
      std::tie(state.adam_fe, state.adam_gen, state.adam_disc) = adam_before;
    }
    throw;
  }
  state.step = report.step;
  report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

std::vector<LossReport> read_loss_history(const std::filesystem::path& path) {
  std::vector<LossReport> out;
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kFileNotFound, path.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const Json j = Json::parse(line);
      LossReport r;
      r.step = j.at("step").get<std::int64_t>();
      r.loss_d = j.at("loss_d").get<double>();
      r.loss_g_adv = j.at("loss_g_adv").get<double>();
      r.loss_cycle = j.at("loss_cycle").get<double>();
      r.loss_g_total = j.at("loss_g_total").get<double>();
      r.wall_ms = j.value("wall_ms", 0.0);
      r.adv_used = j.value("adv_used", true);
      out.push_back(r);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kUnsupportedFormat, path.string() + ": " + e.what());
    }
  }
  return out;
}

TrainResult train(const data::TrainingCorpus& corpus, const nets::ArchConfig& arch, const TrainConfig& config,
                  const std::filesystem::path& run_dir, const std::optional<std::filesystem::path>& resume,
                  const std::function<void(const LossReport&)>& on_step) {
  config.validate();
  arch.validate();
  if (corpus.window() != arch.window) {
    throw Error(ErrorCode::kShapeMismatch, "corpus window does not match the architecture");
  }
  const int n = corpus.n_speakers();
  TrainState state = resume ? from_checkpoint(nets::load_checkpoint(*resume, arch, n)) : initial_state(arch, n, config.seed);

  const auto ckpt_dir = run_dir / "checkpoints";
  std::filesystem::create_directories(ckpt_dir);
  TrainResult result;
  result.history = run_dir / "loss_history.jsonl";

  // Keep only the rows the starting state has already seen.
  std::vector<std::string> kept;
  if (resume && std::filesystem::exists(result.history)) {
    std::ifstream in(result.history);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        if (Json::parse(line).at("step").get<std::int64_t>() <= state.step) kept.push_back(line);
      } catch (const nlohmann::json::exception&) {
        break;  // a torn final line from an interrupted run
      }
    }
  }
  std::ofstream history(result.history, std::ios::trunc);
  if (!history) throw Error(ErrorCode::kIoError, "cannot write " + result.history.string());
  for (const auto& line : kept) history << line << '\n';
  history.flush();

  const std::string meta = Json{{"train_config", Json::parse(train_config_to_json(config))}}.dump();
  auto save = [&] {
    result.final_checkpoint = ckpt_dir / nets::checkpoint_name(state.step);
    nets::save_checkpoint(result.final_checkpoint, to_checkpoint(state, meta));
  };

  int consecutive = 0;
  std::int64_t last_saved = -1;
  while (state.step < config.total_steps) {
    const auto batch = data::sample_batch(corpus, state.rng, config.batch_size);
    LossReport report;
    try {
      report = training_step(state, batch, config);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNonFiniteLoss) throw;
      ++result.retries;
      if (++consecutive > config.max_retries) throw;
      continue;
    }
    consecutive = 0;
    ++result.steps_run;
    history << report_json(report).dump() << '\n';
    history.flush();
    if (on_step) on_step(report);
    if (state.step % config.checkpoint_interval == 0) {
      save();
      last_saved = state.step;
    }
  }
  if (last_saved != state.step) save();
  return result;
}

}  // namespace vcgan::training
