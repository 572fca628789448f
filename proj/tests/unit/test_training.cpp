#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "gradcheck.hpp"
#include "vcgan/error.hpp"
#include "vcgan/nets/checkpoint.hpp"
#include "vcgan/training/losses.hpp"
#include "vcgan/training/trainer.hpp"

using namespace vcgan;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "vcgan_unit_training" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

nets::ClassProbabilities uniform(int n) { return {std::vector<double>(2 * n, 1.0 / (2 * n))}; }

// Three speakers of 8-bin log-mels for the miniature architecture, each with
// its own spectral slope.
data::TrainingCorpus miniature_corpus() {
  const auto reg = data::SpeakerRegistry::from_ids({"a", "b", "c"});
  std::vector<data::SpeakerData> speakers;
  std::mt19937_64 rng(17);
  std::normal_distribution<float> noise(0.0f, 0.3f);
  for (int s = 0; s < 3; ++s) {
    data::SpeakerData sd;
    sd.stats.speaker_id = reg.id_at(s);
    sd.stats.per_bin_max.assign(8, 2.0f);
    sd.stats.per_bin_min.assign(8, -2.0f);
    for (int u = 0; u < 3; ++u) {
      dsp::MelMatrix m(8, 24);
      for (int b = 0; b < 8; ++b)
        for (int t = 0; t < 24; ++t) m.at(b, t) = (s - 1) * 0.4f * (b - 3.5f) / 3.5f + noise(rng);
      sd.utterances.push_back(m);
    }
    speakers.push_back(sd);
  }
  return data::TrainingCorpus(reg, speakers, 8);
}

training::TrainConfig miniature_config() {
  training::TrainConfig c;
  c.batch_size = 2;
  c.total_steps = 6;
  c.checkpoint_interval = 3;
  c.seed = 21;
  c.lr_g = 1e-3;
  c.lr_d = 1e-3;
  return c;
}

void check_same_report(const training::LossReport& a, const training::LossReport& b) {
  CHECK(a.step == b.step);
  CHECK(a.loss_d == b.loss_d);
  CHECK(a.loss_g_adv == b.loss_g_adv);
  CHECK(a.loss_cycle == b.loss_cycle);
  CHECK(a.loss_g_total == b.loss_g_total);
}

}  // namespace

TEST_CASE("discriminator loss of a uniform distribution is log 2N") {
  CHECK(training::loss_discriminator(uniform(2), 0) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(training::loss_discriminator(uniform(2), 3) == doctest::Approx(1.3862943611198906).epsilon(1e-12));
  CHECK(training::loss_discriminator(uniform(291), 17) == doctest::Approx(std::log(582.0)).epsilon(1e-12));
  CHECK_THROWS_AS(training::loss_discriminator(uniform(2), 4), Error);
  CHECK_THROWS_AS(training::loss_discriminator(uniform(2), -1), Error);
}

TEST_CASE("probability floor keeps the loss finite") {
  nets::ClassProbabilities p{{1.0 - 1e-15, 1e-15, 0.0, 0.0}};
  CHECK(training::loss_discriminator(p, 1) == doctest::Approx(-std::log(1e-12)).epsilon(1e-12));
  CHECK(training::loss_discriminator(p, 2) == doctest::Approx(27.631021115928547).epsilon(1e-12));
}

TEST_CASE("batch discriminator loss is the mean") {
  const std::vector<nets::ClassProbabilities> probs{uniform(2), {{0.5, 0.1, 0.2, 0.2}}};
  const std::vector<int> labels{0, 0};
  CHECK(training::loss_discriminator(probs, labels) ==
        doctest::Approx((std::log(4.0) - std::log(0.5)) / 2).epsilon(1e-12));
}

TEST_CASE("generator adversarial loss targets the real class of k") {
  CHECK(training::loss_generator_adv(uniform(2), 1) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  nets::ClassProbabilities p{{0.1, 0.1, 0.5, 0.3}};
  CHECK(training::loss_generator_adv(p, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(training::real_label(3) == 6);
  CHECK(training::fake_label(3) == 7);
}

TEST_CASE("cycle loss arithmetic") {
  const dsp::MelMatrix zero(4, 6, 0.0f), half(4, 6, 0.5f), lo(4, 6, -1.0f), hi(4, 6, 1.0f);
  CHECK(training::loss_cycle(zero, zero) == 0.0);
  CHECK(training::loss_cycle(zero, half) == doctest::Approx(0.5));
  CHECK(training::loss_cycle(lo, hi) == doctest::Approx(2.0));
  CHECK_THROWS_AS(training::loss_cycle(zero, dsp::MelMatrix(4, 5)), Error);
}

TEST_CASE("miniature model gradients match finite differences") {
  const auto arch = nets::ArchConfig::miniature();
  const int n = 2;
  auto params = nets::params_cast<double>(nets::init_params(arch, n, 8));
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-0.9, 0.9);
  nn::Tensor<double> src(nn::Shape{2, 1, 8, 8}), tgt(nn::Shape{2, 1, 8, 8});
  for (auto& v : src.data) v = u(rng);
  for (auto& v : tgt.data) v = u(rng);
  const std::vector<int> target_index{1, 0}, source_index{0, 1};
  std::vector<training::SamplePatchPlan> plan;
  for (int i = 0; i < 2; ++i) plan.push_back(training::plan_sample_patches(arch, rng));

  auto gen_loss = [&](bool total) {
    nn::ParamBinder<double> fe(params.fe, true), gen(params.gen, true), disc(params.disc, false);
    auto l = training::generator_losses<double>(arch, n, fe, gen, disc, nn::Var<double>(src), nn::Var<double>(tgt),
                                                target_index, plan, 0.0, 10.0);
    return std::make_tuple(total ? l.total : l.adv, std::move(fe), std::move(gen));
  };
  SUBCASE("L_G_total over FE and G") {
    auto [loss, fe, gen] = gen_loss(true);
    nn::backward(loss);
    auto grads = fe.gradients();
    grads.merge(gen.gradients());
    nn::ParamStore<double> both;
    for (auto& [k, t] : params.fe.tensors) both.tensors[k] = t;
    for (auto& [k, t] : params.gen.tensors) both.tensors[k] = t;
    const auto probes = vctest::check_gradients(
        both, grads,
        [&] {
          for (auto& [k, t] : both.tensors) (k.rfind("fe.", 0) == 0 ? params.fe : params.gen).at(k) = t;
          return std::get<0>(gen_loss(true)).value().data[0];
        },
        40, 1);
    CHECK(vctest::max_rel_error(probes) < 1e-4);
  }
  SUBCASE("L_D over the discriminator") {
    nn::ParamBinder<double> fe(params.fe, false), gen(params.gen, false);
    const auto emb = nets::fe_forward<double>(arch, fe, nn::Var<double>(tgt));
    const auto fake = nets::gen_forward<double>(arch, gen, nn::Var<double>(src), emb).detach();
    auto d_loss = [&](nn::ParamBinder<double>& disc) {
      const training::DiscriminatorInputs<double> in{nn::Var<double>(src), nn::Var<double>(tgt), fake, source_index,
                                                     target_index};
      return training::discriminator_loss<double>(arch, n, disc, in, plan, 0.0);
    };
    nn::ParamBinder<double> disc(params.disc, true);
    nn::backward(d_loss(disc));
    const auto probes = vctest::check_gradients(
        params.disc, disc.gradients(),
        [&] {
          nn::ParamBinder<double> d(params.disc, false);
          return d_loss(d).value().data[0];
        },
        40, 2);
    CHECK(vctest::max_rel_error(probes) < 1e-4);
  }
}

TEST_CASE("training is reproducible and resumes exactly") {
  const auto corpus = miniature_corpus();
  const auto arch = nets::ArchConfig::miniature();
  const auto cfg = miniature_config();
  const auto run_a = fresh_dir("a"), run_b = fresh_dir("b"), run_c = fresh_dir("c");
  const auto ra = training::train(corpus, arch, cfg, run_a);
  const auto rb = training::train(corpus, arch, cfg, run_b);
  CHECK(ra.steps_run == 6);
  const auto ha = training::read_loss_history(ra.history);
  const auto hb = training::read_loss_history(rb.history);
  REQUIRE(ha.size() == 6);
  REQUIRE(hb.size() == 6);
  for (int i = 0; i < 6; ++i) check_same_report(ha[i], hb[i]);
  CHECK(fs::exists(run_a / "checkpoints" / "ckpt_3.bin"));
  CHECK(fs::exists(run_a / "checkpoints" / "ckpt_6.bin"));

  // Resume into a fresh directory from the step-3 checkpoint.
  fs::copy(run_a / "checkpoints" / "ckpt_3.bin", run_c / "ckpt_3.bin");
  fs::copy(ra.history, run_c / "loss_history.jsonl");
  const auto rc = training::train(corpus, arch, cfg, run_c, run_c / "ckpt_3.bin");
  CHECK(rc.steps_run == 3);
  const auto hc = training::read_loss_history(rc.history);
  REQUIRE(hc.size() == 6);
  for (int i = 0; i < 6; ++i) check_same_report(ha[i], hc[i]);
  const auto end_a = nets::load_checkpoint(ra.final_checkpoint), end_c = nets::load_checkpoint(rc.final_checkpoint);
  CHECK(nets::params_checksum(end_a.params) == nets::params_checksum(end_c.params));
  CHECK(end_c.step == 6);
}

TEST_CASE("a non-finite step leaves the state untouched") {
  const auto corpus = miniature_corpus();
  auto state = training::initial_state(nets::ArchConfig::miniature(), 3, 0);
  auto rng = data::make_stream(0, 9);
  auto batch = data::sample_batch(corpus, rng, 2);
  batch[0].source_window.values[5] = std::numeric_limits<float>::quiet_NaN();
  const auto before = nets::params_checksum(state.params);
  try {
    training::training_step(state, batch, miniature_config());
    FAIL("expected NonFiniteLoss");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonFiniteLoss);
  }
  CHECK(nets::params_checksum(state.params) == before);
  CHECK(state.step == 0);
  CHECK(state.adam_gen.step == 0);
}

TEST_CASE("train config validation and json") {
  training::TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.lr_g = -1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = miniature_config();
  const auto back = training::train_config_from_json(training::train_config_to_json(c));
  CHECK(back.batch_size == c.batch_size);
  CHECK(back.lr_g == c.lr_g);
  CHECK(back.seed == c.seed);
  CHECK(training::train_config_from_json(R"({"total_steps": 5})", c).total_steps == 5);
}

TEST_CASE("resuming with a different arch is refused") {
  const auto corpus = miniature_corpus();
  const auto dir = fresh_dir("mismatch");
  nets::Checkpoint ck;
  auto other = nets::ArchConfig::miniature();
  other.fe_channels = {3, 3, 3, 1};
  ck.params = nets::init_params(other, 3, 0);
  nets::save_checkpoint(dir / "ckpt_1.bin", ck);
  CHECK_THROWS_AS(training::train(corpus, nets::ArchConfig::miniature(), miniature_config(), dir, dir / "ckpt_1.bin"),
                  Error);
}
